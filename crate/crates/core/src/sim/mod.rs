//! Time stepping of the plant, the target systems and the observer, and closed-loop runs.

mod closed_loop;
mod history;
mod observer;
pub(crate) mod transport;

pub use closed_loop::{
    fit_decay, fit_decay_series, random_initial_state, run_closed_loop, Mode, Sample, SimConfig, Trajectory,
    DIVERGENCE_THRESHOLD, TRAJECTORY_SCHEMA,
};
pub use history::HistoryBuffer;
pub use observer::Observer;
pub use transport::{rk4_linear, step_plant, PlantStepper};
