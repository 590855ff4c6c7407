//! Dense linear algebra and integral-equation utilities shared by every other module.

pub mod linalg;
pub mod riccati;
pub mod sampled;
pub mod volterra;

/// Dense real matrix used for every constant coupling matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

pub use linalg::{complex_spectral_radius, eigenvalues, expm, norm2, spectral_abscissa};
pub use riccati::{stabilizing_gain, DEFAULT_MARGIN};
pub use sampled::{trapezoid, trapezoid_weights, uniform_grid, SampledFunction};
pub use volterra::{volterra2_solve, GridKernel, VolterraBounds};
