//! Backstepping and time-delay synthesis of observers and output-feedback controllers for
//! `n + m` linear hyperbolic PDEs coupled at both boundaries to linear ODEs, together with a
//! semi-Lagrangian simulator that certifies the resulting closed loops.

pub mod cli;
pub mod delayform;
pub mod error;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
