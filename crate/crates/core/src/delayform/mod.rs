//! Explicit time-delay representations of the two target systems, obtained by tracing every
//! boundary trace back along characteristics, and the simulation oracle that certifies them.

mod control;
mod observer;
mod operator;
mod residual;

pub use control::{derive_control_delay_form, ControlDelayForm};
pub use observer::{compute_y1, derive_observer_delay_form, observer_horizon, ObserverDelayForm};
pub use operator::DelayOperator;
pub use residual::{residual_check_control, residual_check_observer, ResidualOptions};

use crate::error::Result;
use crate::numerics::Matrix;

/// Kernel samples per unit of kernel-grid points.
pub const KERNEL_OVERSAMPLING: usize = 4;

/// Trapezoid rule for `∫ₐᵇ f` with cells no wider than `h`.
fn quad(a: f64, b: f64, h: f64, f: impl Fn(f64) -> Matrix) -> Matrix {
    let fa = f(a);
    if b - a <= 1e-14 {
        return fa * 0.0;
    }
    let cells = ((b - a) / h).ceil().max(1.0) as usize;
    let step = (b - a) / cells as f64;
    let mut acc = (fa + f(b)) * 0.5;
    for k in 1..cells {
        acc += f(a + k as f64 * step);
    }
    acc * step
}

/// Stacks single-row operators into one.
pub(crate) fn stack(rows: &[DelayOperator]) -> Result<DelayOperator> {
    let n = rows.len();
    let (_, cols) = rows[0].shape();
    let mut out = DelayOperator::zeros(n, cols, rows[0].horizon(), rows[0].points());
    for (i, r) in rows.iter().enumerate() {
        let mut e = Matrix::zeros(n, r.shape().0);
        e[(i, 0)] = 1.0;
        out.add_assign(&r.premul(&e))?;
    }
    Ok(out)
}

/// `n×m` matrix with `block` placed at `(r0, c0)`.
fn placed(rows: usize, cols: usize, r0: usize, c0: usize, block: &Matrix) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.view_mut((r0, c0), block.shape()).copy_from(block);
    m
}
