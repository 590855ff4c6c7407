use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PlantModel;
use crate::numerics::{complex_spectral_radius, norm2, Matrix};

/// Slack applied to the strict inequality `sup ρ < 1`.
pub const ASSUMPTION1_SLACK: f64 = 1e-6;
const RANDOM_SAMPLES: usize = 1000;
const MAX_GRID_PHASES: usize = 8;
const MAX_GRID_EVALUATIONS: usize = 2_000_000;
const SEED: u64 = 0x5eed_a551;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption1Report {
    pub pass: bool,
    pub sup_radius: f64,
    /// `‖Q‖₂‖R‖₂`, a sufficient certificate when below one.
    pub norm_bound: f64,
    /// False when the phase torus was too large for a grid and only random phases were used.
    pub grid_search: bool,
    pub evaluations: usize,
}

/// Spectral radius of `Σ_k Q_{ik} R_{kℓ} e^{jθ_{kℓ}}` for one phase vector (`θ` indexed `k·n + ℓ`).
fn radius_at(q: &Matrix, r: &Matrix, theta: &[f64]) -> Result<f64> {
    let (n, m) = q.shape();
    let mut re = Matrix::zeros(n, n);
    let mut im = Matrix::zeros(n, n);
    for k in 0..m {
        for l in 0..n {
            let (s, c) = theta[k * n + l].sin_cos();
            let rkl = r[(k, l)];
            for i in 0..n {
                let w = q[(i, k)] * rkl;
                re[(i, l)] += w * c;
                im[(i, l)] += w * s;
            }
        }
    }
    if n == 1 {
        return Ok(re[(0, 0)].hypot(im[(0, 0)]));
    }
    complex_spectral_radius(&re, &im)
}

/// Sup over the phase torus of the boundary reflection spectral radius.
///
/// A global phase rotation leaves the spectral radius unchanged, so the grid pins the first phase
/// at zero and covers the remaining `n·m − 1` phases with `theta_grid_points` nodes each.
pub fn check_assumption1(model: &PlantModel, theta_grid_points: usize) -> Result<Assumption1Report> {
    if theta_grid_points < 8 {
        return Err(Error::Precondition(format!(
            "theta_grid_points must be at least 8, got {theta_grid_points}"
        )));
    }
    let (q, r) = (&model.q_mat, &model.r);
    let (n, m) = (model.n, model.m);
    if q.shape() != (n, m) || r.shape() != (m, n) {
        return Err(Error::Dimension("Q must be n×m and R m×n".into()));
    }
    let phases = n * m;
    let mut sup: f64 = 0.0;
    let mut evaluations = 0;
    let mut theta = vec![0.0; phases];

    let free = phases - 1;
    let grid_search = phases <= MAX_GRID_PHASES
        && (theta_grid_points as f64).powi(free as i32) <= MAX_GRID_EVALUATIONS as f64;
    if grid_search {
        let step = 2.0 * std::f64::consts::PI / theta_grid_points as f64;
        let total = theta_grid_points.pow(free as u32);
        for idx in 0..total {
            let mut rest = idx;
            for t in theta.iter_mut().skip(1) {
                *t = (rest % theta_grid_points) as f64 * step;
                rest /= theta_grid_points;
            }
            sup = sup.max(radius_at(q, r, &theta)?);
            evaluations += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..RANDOM_SAMPLES {
        for t in theta.iter_mut() {
            *t = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        }
        sup = sup.max(radius_at(q, r, &theta)?);
        evaluations += 1;
    }
    Ok(Assumption1Report {
        pass: sup < 1.0 - ASSUMPTION1_SLACK,
        sup_radius: sup,
        norm_bound: norm2(q) * norm2(r),
        grid_search,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_model;
    use proptest::prelude::*;

    fn scalar(qv: f64, rv: f64) -> PlantModel {
        let mut m = scalar_model(0.0, 0.0);
        m.q_mat[(0, 0)] = qv;
        m.r[(0, 0)] = rv;
        m
    }

    #[test]
    fn scalar_examples() {
        let a = check_assumption1(&scalar(0.5, 0.5), 16).unwrap();
        assert!(a.pass);
        assert!((a.sup_radius - 0.25).abs() < 1e-12);
        let b = check_assumption1(&scalar(2.0, 0.6), 16).unwrap();
        assert!(!b.pass);
        assert!((b.sup_radius - 1.2).abs() < 1e-12);
    }

    #[test]
    fn zero_q() {
        let a = check_assumption1(&scalar(0.0, 0.9), 8).unwrap();
        assert!(a.pass && a.sup_radius == 0.0 && a.norm_bound == 0.0);
    }

    #[test]
    fn grid_too_coarse() {
        assert!(check_assumption1(&scalar(0.1, 0.1), 4).is_err());
    }

    #[test]
    fn two_by_one_matches_brute_force() {
        // n = 2, m = 1: M = Q (R ∘ E) is rank one, so ρ = |Σ_ℓ R_ℓ Q_ℓ e^{jθ_ℓ}| ≤ Σ|R_ℓ Q_ℓ|.
        let mut m = scalar_model(0.0, 0.0);
        m.n = 2;
        m.q_mat = Matrix::from_row_slice(2, 1, &[0.4, -0.3]);
        m.r = Matrix::from_row_slice(1, 2, &[0.3, 0.2]);
        let rep = check_assumption1(&m, 64).unwrap();
        assert!((rep.sup_radius - (0.4 * 0.3 + 0.3 * 0.2)).abs() < 1e-12);
        assert!(rep.grid_search);
    }

    proptest! {
        #[test]
        fn scaling_q_is_monotone(qv in -1.0f64..1.0, rv in -1.0f64..1.0, c in 1.0f64..3.0) {
            let a = check_assumption1(&scalar(qv, rv), 8).unwrap();
            let b = check_assumption1(&scalar(c * qv, rv), 8).unwrap();
            prop_assert!(b.sup_radius >= a.sup_radius - 1e-12);
        }

        #[test]
        fn scalar_radius_is_abs_product(qv in -2.0f64..2.0, rv in -2.0f64..2.0) {
            let a = check_assumption1(&scalar(qv, rv), 8).unwrap();
            prop_assert!((a.sup_radius - (qv * rv).abs()).abs() <= 1e-9);
        }
    }
}
