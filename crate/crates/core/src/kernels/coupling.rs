use crate::error::{Error, Result};
use crate::kernels::observer::KernelSetObserver;
use crate::model::PlantModel;
use crate::numerics::{trapezoid, volterra2_solve, Matrix, SampledFunction, VolterraBounds};

/// Tolerance on the upper part of `Fα`, which vanishes by the kernel closure.
pub const F_ALPHA_TRIANGULAR_TOL: f64 = 1e-8;

/// Coefficients of the observer target system.
#[derive(Debug, Clone)]
pub struct CouplingFunctions {
    /// `n×n`, source of `α` in `α_t + Λ⁺α_x = G₁(x)α(t,1)`.
    pub g1: SampledFunction,
    /// `m×n`, source of `β`.
    pub g2: SampledFunction,
    /// `p×n`, coefficient of `α(t,1)` in the `ξ` equation.
    pub g3: Matrix,
    /// `p×q`, coefficient of `X₁` in the `ξ` equation.
    pub g4: Matrix,
    /// `n×n`, strictly lower triangular.
    pub f_alpha: SampledFunction,
    /// `n×m`.
    pub f_beta: SampledFunction,
    /// `n×q`, `Qγ_β(0) − γ_α(0)`.
    pub gamma0: Matrix,
}

/// Solves the Volterra system for `(G₁, G₂)` and assembles the remaining coefficients.
pub fn solve_coupling_terms(model: &PlantModel, k: &KernelSetObserver) -> Result<CouplingFunctions> {
    let (n, m) = (model.n, model.m);
    if k.n != n || k.m != m {
        return Err(Error::Dimension("kernel set does not match the model".into()));
    }
    let grid = &k.grid;
    let npts = grid.n();
    let last = npts - 1;
    let lp = model.lambda_plus();
    let lm_r = model.lambda_minus() * &model.r;
    let forcing: Vec<Matrix> = (0..npts)
        .map(|a| {
            let l_a = k.l_block(a, last, 0, n + m, 0, n);
            let l_b = k.l_block(a, last, 0, n + m, n, m);
            -(l_a * &lp) + l_b * &lm_r - k.gamma.at(a) * &model.e1
        })
        .collect();
    let forcing = SampledFunction::new(grid.points(), forcing)?;
    let g = volterra2_solve(&k.l, &forcing, VolterraBounds::Upper)?;
    let g1 = g.map(|v| v.rows(0, n).into_owned());
    let g2 = g.map(|v| v.rows(n, m).into_owned());

    let integrand = SampledFunction::new(
        grid.points(),
        (0..npts)
            .map(|a| k.l1.at(a) * g1.at(a) + k.l2.at(a) * g2.at(a))
            .collect(),
    )?;
    let g3 = k.l2.at(last) * &lm_r - k.l1.at(last) * &lp + trapezoid(&integrand);
    let g4 = &model.e0 * k.gamma_beta().at(0);
    let gamma0 = &model.q_mat * k.gamma_beta().at(0) - k.gamma_alpha().at(0);

    let mut f_alpha = Vec::with_capacity(npts);
    let mut f_beta = Vec::with_capacity(npts);
    for b in 0..npts {
        let lba = k.l_block(0, b, n, m, 0, n);
        let lbb = k.l_block(0, b, n, m, n, m);
        let mut fa = k.l_block(0, b, 0, n, 0, n) - &model.q_mat * lba - &model.c0 * k.l1.at(b);
        // The corner node carries the diagonal jump value instead of the closure.
        for i in 0..n {
            for j in i..n {
                if b > 0 && fa[(i, j)].abs() > F_ALPHA_TRIANGULAR_TOL {
                    return Err(Error::Consistency(format!(
                        "F_alpha({}) has upper entry ({i},{j}) = {:e}",
                        grid.x(b),
                        fa[(i, j)]
                    )));
                }
                fa[(i, j)] = 0.0;
            }
        }
        f_alpha.push(fa);
        f_beta.push(k.l_block(0, b, 0, n, n, m) - &model.q_mat * lbb - &model.c0 * k.l2.at(b));
    }

    Ok(CouplingFunctions {
        g1,
        g2,
        g3,
        g4,
        f_alpha: SampledFunction::new(grid.points(), f_alpha)?,
        f_beta: SampledFunction::new(grid.points(), f_beta)?,
        gamma0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::grid::{interp_triangle, TriGrid};
    use crate::kernels::observer::solve_observer_kernels;
    use crate::model::fixtures::{demo_model, scalar_model};
    use crate::numerics::{trapezoid_weights, uniform_grid};

    #[test]
    fn zero_coupling() {
        let mut model = scalar_model(0.0, 0.0);
        model.a1 = Matrix::zeros(1, 1);
        let k = solve_observer_kernels(&model, TriGrid::new(41).unwrap()).unwrap();
        let c = solve_coupling_terms(&model, &k).unwrap();
        assert_eq!(c.g1.sup_norm(), 0.0);
        let want = -(&model.c1 * &model.e1);
        assert!(c.g2.values().iter().all(|v| (v - &want).amax() < 1e-15));
        assert!((&c.g4 - &model.e0 * &model.c1).amax() < 1e-15);
    }

    #[test]
    fn f_alpha_vanishes_without_boundary_coupling() {
        let mut model = demo_model();
        model.q_mat.fill(0.0);
        model.c0.fill(0.0);
        for s in [&mut model.sigma_pp, &mut model.sigma_pm, &mut model.sigma_mp] {
            s.values_mut().iter_mut().for_each(|v| v.fill(0.0));
        }
        let k = solve_observer_kernels(&model, TriGrid::new(41).unwrap()).unwrap();
        let c = solve_coupling_terms(&model, &k).unwrap();
        assert_eq!(c.f_alpha.sup_norm(), 0.0);
    }

    #[test]
    fn demo_f_alpha_is_strictly_lower() {
        let model = demo_model();
        let k = solve_observer_kernels(&model, TriGrid::new(101).unwrap()).unwrap();
        let c = solve_coupling_terms(&model, &k).unwrap();
        assert!(c.f_alpha.values().iter().all(|v| v[(0, 1)] == 0.0 && v[(0, 0)] == 0.0));
        assert!(c.f_alpha.sup_norm() > 0.0);
    }

    /// Re-evaluates `G = ∫ₓ¹ L G + f` on the 2×-refined grid with every factor interpolated.
    fn refined_residual(model: &PlantModel, npts: usize) -> f64 {
        let grid = TriGrid::new(npts).unwrap();
        let k = solve_observer_kernels(model, grid).unwrap();
        let c = solve_coupling_terms(model, &k).unwrap();
        let (n, m) = (model.n, model.m);
        let w = n + m;
        let fine = uniform_grid(grid.refined().n(), 0.0, 1.0);
        let g_at = |x: f64| {
            let mut g = Matrix::zeros(w, n);
            g.view_mut((0, 0), (n, n)).copy_from(&c.g1.eval(x));
            g.view_mut((n, 0), (m, n)).copy_from(&c.g2.eval(x));
            g
        };
        let l_at = |x: f64, nu: f64| Matrix::from_fn(w, w, |i, j| interp_triangle(&k.l, &grid, x, nu, i, j));
        let lp = model.lambda_plus();
        let lm_r = model.lambda_minus() * &model.r;
        let mut worst: f64 = 0.0;
        for (a, &x) in fine.iter().enumerate() {
            let l1 = l_at(x, 1.0);
            let f = -(l1.columns(0, n) * &lp) + l1.columns(n, m) * &lm_r - k.gamma.eval(x) * &model.e1;
            let tail = &fine[a..];
            let mut integral = Matrix::zeros(w, n);
            if tail.len() > 1 {
                for (nu, wt) in tail.iter().zip(trapezoid_weights(tail)) {
                    integral += l_at(x, *nu) * g_at(*nu) * wt;
                }
            }
            worst = worst.max((g_at(x) - integral - f).amax());
        }
        worst
    }

    #[test]
    fn volterra_residual_on_refined_grid() {
        let model = scalar_model(0.4, -0.3);
        let r = refined_residual(&model, 201);
        assert!(r <= 1e-5, "residual {r:e}");
    }
}
