use crate::delayform::DelayOperator;
use crate::error::Result;
use crate::numerics::{expm, Matrix};

/// Which side of the delay coefficients the exponential multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Left,
    Right,
}

fn times(side: Side, e: &Matrix, m: &Matrix) -> Matrix {
    match side {
        Side::Left => e * m,
        Side::Right => m * e,
    }
}

const GAUSS: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// `∫₀^δ e^{±sA}(1 − s/δ) ds`.
fn hat_moment(a: &Matrix, sign: f64, delta: f64) -> Result<Matrix> {
    let mut acc = Matrix::zeros(a.nrows(), a.ncols());
    for (g, w) in GAUSS {
        acc += expm(a, sign * g * delta)? * (w * delta * (1.0 - g));
    }
    Ok(acc)
}

/// For `op = Σ_d P_d δ_d + K`, the kernel `σ ↦ Σ_{d ≥ σ} e^{−A(d−σ)}P_d + ∫_σ^Θ e^{−A(θ−σ)}K(θ) dθ`
/// as node masses on the grid of `op`, and its value `Σ_d e^{−Ad}P_d + ∫ e^{−Aθ}K(θ) dθ` at `σ = 0`.
/// The exponential multiplies from `side`.
pub(crate) fn exp_tail(op: &DelayOperator, a: &Matrix, side: Side) -> Result<(DelayOperator, Matrix)> {
    let npts = op.points();
    let delta = op.delta();
    let shape = op.shape();
    let masses = op.masses();
    let e = expm(a, -delta)?;
    let h_left = hat_moment(a, -1.0, delta)?;
    let h_right = hat_moment(a, 1.0, delta)?;
    let h_both = &h_left + &h_right;

    let mut out = vec![Matrix::zeros(shape.0, shape.1); npts];
    let mut tail = Matrix::zeros(shape.0, shape.1);
    for j in (0..npts).rev() {
        out[j] = if j == 0 {
            times(side, &h_right, &tail)
        } else {
            times(side, &h_left, &masses[j]) + times(side, &h_both, &tail)
        };
        tail = times(side, &e, &(&masses[j] + &tail));
    }
    // `tail` is now Σ_k e^{−Aθ_k}K_k·e^{−Aδ}; undo the last factor.
    let mut total = times(side, &expm(a, delta)?, &tail);

    for (d, p) in op.taps() {
        total += times(side, &expm(a, -d)?, p);
        let d = *d;
        let err = std::cell::RefCell::new(None);
        DelayOperator::deposit_into(&mut out, delta, 0.0, d, |s| match expm(a, s - d) {
            Ok(x) => times(side, &x, p),
            Err(e) => {
                err.replace(Some(e));
                Matrix::zeros(shape.0, shape.1)
            }
        });
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
    }
    Ok((DelayOperator::from_masses(op.horizon(), out), total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn tap_tail_matches_closed_form() {
        // One tap P at d: the kernel is P·e^{−a(d−σ)} on [0, d].
        let (a, d, p) = (0.7, 0.6, 2.0);
        let mut op = DelayOperator::zeros(1, 1, 1.0, 201);
        op.add_tap(d, &scalar(p)).unwrap();
        let (k, total) = exp_tail(&op, &scalar(a), Side::Left).unwrap();
        assert!((total[(0, 0)] - p * (-a * d).exp()).abs() < 1e-14);
        let mass: f64 = k.masses().iter().map(|m| m[(0, 0)]).sum();
        let exact = p * (1.0 - (-a * d).exp()) / a;
        assert!((mass - exact).abs() < 1e-10, "{mass} {exact}");
        let dens = k.kernel().eval(0.3)[(0, 0)];
        assert!((dens - p * (-a * (d - 0.3)).exp()).abs() < 1e-5);
    }

    #[test]
    fn kernel_tail_matches_closed_form() {
        // K ≡ 1 on [0, 1]: tail(σ) = (1 − e^{−a(1−σ)})/a and total (1 − e^{−a})/a.
        let a = -0.4;
        let mut op = DelayOperator::zeros(1, 1, 1.0, 401);
        op.add_kernel_fn(1.0, |_| scalar(1.0));
        let (k, total) = exp_tail(&op, &scalar(a), Side::Right).unwrap();
        assert!((total[(0, 0)] - (1.0 - (-a).exp()) / a).abs() < 1e-5);
        let dens = k.kernel().eval(0.5)[(0, 0)];
        assert!((dens - (1.0 - (-a * 0.5).exp()) / a).abs() < 1e-5, "{dens}");
    }

    #[test]
    fn sides_differ_for_noncommuting_blocks() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let mut op = DelayOperator::zeros(2, 2, 1.0, 11);
        let p = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        op.add_tap(0.5, &p).unwrap();
        let (_, left) = exp_tail(&op, &a, Side::Left).unwrap();
        let (_, right) = exp_tail(&op, &a, Side::Right).unwrap();
        let e = expm(&a, -0.5).unwrap();
        assert!((left - &e * &p).amax() < 1e-14);
        assert!((right - &p * &e).amax() < 1e-14);
    }
}
