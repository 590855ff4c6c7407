use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::linalg::eigenvalues;
use crate::numerics::Matrix;

/// Default stability margin required of designed closed loops.
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Matrix sign function by scaled Newton iteration.
fn matrix_sign(h: &Matrix) -> Result<Matrix> {
    let n = h.nrows();
    let mut z = h.clone();
    let mut last = f64::INFINITY;
    for it in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or_else(|| {
            Error::Consistency("Hamiltonian has eigenvalues on the imaginary axis".into())
        })?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&z * c + &inv / c) * 0.5;
        let diff = (&next - &z).norm();
        let scale = next.norm().max(1.0);
        z = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= 1e-13 * scale || (it > 10 && diff >= last && diff <= 1e-9 * scale) {
            return Ok(z);
        }
        last = diff;
    }
    Err(Error::NoConvergence {
        what: "matrix sign iteration".into(),
        iterations: 100,
        residual: last,
    })
}

/// Stabilizing solution `P` of `AᵀP + PA − PBBᵀP + I = 0` from the stable invariant subspace of
/// the Hamiltonian matrix.
pub fn care_identity_weights(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-(b * b.transpose())));
    h.view_mut((n, 0), (n, n)).copy_from(&(-Matrix::identity(n, n)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&h)?;
    // W [I; P] = −[I; P]  ⇒  [W12; W22 + I] P = −[W11 + I; W21]
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + Matrix::identity(n, n)));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + Matrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Consistency(format!("invariant subspace solve failed: {e}")))?;
    Ok((&p + p.transpose()) * 0.5)
}

fn unstable_part(eigs: &[Complex64], margin: f64) -> Vec<Complex64> {
    eigs.iter().copied().filter(|z| z.re > -margin + 1e-8).collect()
}

/// Gain `K` such that `A + BK` has every eigenvalue with real part ≤ −`margin`.
///
/// An already-stable `A` returns `K = 0`. Otherwise the Riccati equation with identity weights is
/// solved for `(A, B)`, and for the shifted pair `(A + margin·I, B)` if the unshifted design falls
/// short of the margin.
pub fn stabilizing_gain(a: &Matrix, b: &Matrix, margin: f64) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "stabilizing_gain: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if margin <= 0.0 {
        return Err(Error::Invalid("stability margin must be positive".into()));
    }
    let m = b.ncols();
    let open = eigenvalues(a)?;
    if unstable_part(&open, margin).is_empty() {
        return Ok(Matrix::zeros(m, n));
    }
    let mut last_closed = open.clone();
    for shift in [0.0, margin] {
        let shifted = a + Matrix::identity(n, n) * shift;
        let p = match care_identity_weights(&shifted, b) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let k = -(b.transpose() * p);
        let closed = eigenvalues(&(a + b * &k))?;
        if unstable_part(&closed, margin).is_empty() {
            return Ok(k);
        }
        last_closed = closed;
    }
    Err(Error::Unstabilizable {
        eigenvalues: unstable_part(&last_closed, margin),
    })
}
