//! Backstepping kernels of the observer and controller transforms, the coupling functions of the
//! resulting target systems, and the transforms themselves.

mod control;
mod coupling;
mod export;
mod grid;
mod observer;
mod transform;

pub use control::{solve_control_kernels, KernelSetControl};
pub use coupling::{solve_coupling_terms, CouplingFunctions, F_ALPHA_TRIANGULAR_TOL};
pub use grid::{interp_triangle, TriGrid};
pub use observer::{solve_observer_kernels, KernelSetObserver, KERNEL_MAX_SWEEPS, KERNEL_TOL};
pub use transform::{apply_t, apply_t1, invert_t, invert_t1, xi_functional, XiFunctional};
pub use export::{
    cache_key, cache_path, export_kernels, read_csv, write_function_csv, write_kernel_csv, CsvTable,
    KernelBundle,
};
