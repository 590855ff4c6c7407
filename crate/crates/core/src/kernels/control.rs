use crate::error::{Error, Result};
use crate::kernels::coupling::CouplingFunctions;
use crate::kernels::grid::{interp_nodes, TriGrid};
use crate::model::PlantModel;
use crate::numerics::{
    trapezoid_weights, volterra2_solve, GridKernel, Matrix, SampledFunction, VolterraBounds,
};

/// Kernels of the controller-side transforms `α = (I − Ľ)α̌`, `α̌ = (I − L̄)ᾱ` and the
/// coefficients of the resulting target system.
#[derive(Debug, Clone)]
pub struct KernelSetControl {
    pub grid: TriGrid,
    pub n: usize,
    /// Lower triangular in its matrix index, stored on the triangle `x ≤ y`.
    pub l_check: GridKernel,
    /// Strictly upper triangular.
    pub g_check: SampledFunction,
    /// Strictly upper triangular, stored on the full square.
    pub l_bar: GridKernel,
    pub g5: SampledFunction,
    pub f_alpha_bar: SampledFunction,
}

/// Full-square operator `(Kg)(x) = ∫₀¹ K(x,y) g(y) dy` on grid samples.
pub(crate) fn apply_full(k: &GridKernel, g: &[Matrix], w: &[f64]) -> Vec<Matrix> {
    let npts = k.n();
    (0..npts)
        .map(|a| {
            let mut acc = Matrix::zeros(k.shape().0, g[0].ncols());
            for b in 0..npts {
                acc += k.get(a, b) * &g[b] * w[b];
            }
            acc
        })
        .collect()
}

/// Implements the column sweep: column `j` of `Ǧ` solves a Volterra equation whose kernel is the
/// already known columns `< j` of `Ľ`; it then fixes the `y = 1` datum of column `j` of `Ľ`, which
/// is transported along the characteristics of direction `(λ_i, λ_j)`.
pub fn solve_control_kernels(
    model: &PlantModel,
    coupling: &CouplingFunctions,
    grid: TriGrid,
) -> Result<KernelSetControl> {
    let n = model.n;
    let npts = grid.n();
    let h = grid.h();
    let last = npts - 1;
    let lam = &model.lambda;
    let g1 = &coupling.g1;
    if g1.len() != npts || g1.shape() != (n, n) {
        return Err(Error::Dimension("G1 must be n×n on the kernel grid".into()));
    }
    let pts = grid.points();

    let mut l_check = GridKernel::zeros(npts, n, n);
    let mut g_check: Vec<Matrix> = vec![Matrix::zeros(n, n); npts];
    for j in 0..n {
        if j > 0 {
            let kernel = GridKernel::from_fn(npts, j, j, |a, b| {
                Matrix::from_fn(j, j, |i, k| if a <= b { l_check.entry(a, b, i, k) } else { 0.0 })
            });
            let forcing = SampledFunction::from_fn(pts.clone(), |x| {
                let idx = ((x / h).round() as usize).min(last);
                Matrix::from_fn(j, 1, |i, _| g1.at(idx)[(i, j)])
            });
            let col = volterra2_solve(&kernel, &forcing, VolterraBounds::Upper).map_err(|e| match e {
                Error::NoConvergence { iterations, residual, .. } => Error::NoConvergence {
                    what: format!("control kernel column {j} Volterra iteration"),
                    iterations,
                    residual,
                },
                other => other,
            })?;
            for (a, v) in col.values().iter().enumerate() {
                for i in 0..j {
                    g_check[a][(i, j)] = v[(i, 0)];
                }
            }
        }
        // Datum on y = 1 for rows i ≥ j.
        let mut datum = vec![vec![0.0; npts]; n];
        for (i, row) in datum.iter_mut().enumerate().skip(j) {
            for (a, d) in row.iter_mut().enumerate() {
                let mut acc = g1.at(a)[(i, j)];
                if j > 0 && a < last {
                    let w = trapezoid_weights(&pts[a..]);
                    for (b, wb) in (a..npts).zip(w) {
                        for k in 0..j {
                            acc += wb * l_check.entry(a, b, i, k) * g_check[b][(k, j)];
                        }
                    }
                }
                *d = acc / lam[j];
            }
        }
        for (i, row) in datum.iter().enumerate().skip(j) {
            let r = lam[i] / lam[j];
            for a in 0..npts {
                for b in a..npts {
                    let xs = grid.x(a) + r * (1.0 - grid.x(b));
                    let v = if xs <= 1.0 + 1e-12 {
                        interp_nodes(|k| row[k], xs, h, 0, last)
                    } else {
                        0.0
                    };
                    l_check.set_entry(a, b, i, j, v);
                }
            }
        }
    }
    let g_check = SampledFunction::new(pts.clone(), g_check)?;

    let mut l_bar = GridKernel::zeros(npts, n, n);
    for i in 0..n {
        for j in i + 1..n {
            let r = lam[i] / lam[j];
            // L̄(1, y) = 0 also at the corner y = 1.
            for a in 0..last {
                for b in 0..npts {
                    let xs = grid.x(a) + r * (1.0 - grid.x(b));
                    if xs <= 1.0 + 1e-12 {
                        let v = interp_nodes(|k| g_check.at(k)[(i, j)], xs, h, 0, last) / lam[j];
                        l_bar.set_entry(a, b, i, j, v);
                    }
                }
            }
        }
    }

    let w_full = trapezoid_weights(&pts);
    let lp = model.lambda_plus();
    // G₅ = f + L̄G₅ with nilpotent L̄: the Neumann series stops after n terms.
    let f: Vec<Matrix> = (0..npts).map(|a| l_bar.get(a, 0) * &lp).collect();
    let mut g5 = f.clone();
    let mut term = f;
    for _ in 1..n {
        term = apply_full(&l_bar, &term, &w_full);
        for (g, t) in g5.iter_mut().zip(&term) {
            *g += t;
        }
    }

    // Φ(η) = Fα(η) + Ľ(0,η) − ∫₀^η Fα(ν)Ľ(ν,η)dν;  F̄α(y) = Φ(y) + L̄(0,y) − ∫₀¹ Φ(η)L̄(η,y)dη.
    let fa = &coupling.f_alpha;
    let phi: Vec<Matrix> = (0..npts)
        .map(|b| {
            let mut v = fa.at(b) + l_check.get(0, b);
            if b > 0 {
                for (a, wa) in (0..=b).zip(trapezoid_weights(&pts[..=b])) {
                    v -= fa.at(a) * l_check.get(a, b) * wa;
                }
            }
            v
        })
        .collect();
    let f_alpha_bar: Vec<Matrix> = (0..npts)
        .map(|b| {
            let mut v = &phi[b] + l_bar.get(0, b);
            for (a, wa) in w_full.iter().enumerate() {
                v -= &phi[a] * l_bar.get(a, b) * *wa;
            }
            v
        })
        .collect();

    Ok(KernelSetControl {
        grid,
        n,
        l_check,
        g_check,
        l_bar,
        g5: SampledFunction::new(pts.clone(), g5)?,
        f_alpha_bar: SampledFunction::new(pts, f_alpha_bar)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::coupling::CouplingFunctions;
    use crate::model::fixtures::{demo_model, scalar_model};
    use crate::numerics::uniform_grid;

    fn coupling_with(n: usize, npts: usize, g1: Matrix, f_alpha: Matrix) -> CouplingFunctions {
        let g = uniform_grid(npts, 0.0, 1.0);
        CouplingFunctions {
            g1: SampledFunction::constant(g.clone(), g1),
            g2: SampledFunction::zeros(g.clone(), 1, n),
            g3: Matrix::zeros(1, n),
            g4: Matrix::zeros(1, 1),
            f_alpha: SampledFunction::constant(g.clone(), f_alpha),
            f_beta: SampledFunction::zeros(g, n, 1),
            gamma0: Matrix::zeros(n, 1),
        }
    }

    #[test]
    fn zero_data() {
        let fa = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.7, 0.0]);
        let c = coupling_with(2, 21, Matrix::zeros(2, 2), fa.clone());
        let k = solve_control_kernels(&demo_model(), &c, TriGrid::new(21).unwrap()).unwrap();
        assert_eq!(k.l_check.sup_norm(false), 0.0);
        assert_eq!(k.g_check.sup_norm(), 0.0);
        assert_eq!(k.l_bar.sup_norm(false), 0.0);
        assert_eq!(k.g5.sup_norm(), 0.0);
        assert!(k.f_alpha_bar.values().iter().all(|v| *v == fa));
    }

    #[test]
    fn scalar_reduces_to_transported_datum() {
        let model = scalar_model(0.0, 0.0);
        let npts = 41;
        let g1 = SampledFunction::from_fn(uniform_grid(npts, 0.0, 1.0), |x| Matrix::from_element(1, 1, x * x));
        let mut c = coupling_with(1, npts, Matrix::zeros(1, 1), Matrix::zeros(1, 1));
        c.g1 = g1;
        let k = solve_control_kernels(&model, &c, TriGrid::new(npts).unwrap()).unwrap();
        assert_eq!(k.g_check.sup_norm(), 0.0);
        assert_eq!(k.l_bar.sup_norm(false), 0.0);
        // Ľ(x,y) = G₁(x + 1 − y)/λ with G₁ sampled at grid nodes.
        let g = TriGrid::new(npts).unwrap();
        for a in 0..npts {
            for b in a..npts {
                let s = g.x(a + npts - 1 - b);
                assert!((k.l_check.entry(a, b, 0, 0) - s * s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_g1_matches_closed_form() {
        // Ľ₁₁ ≡ c/λ₁, so Ǧ₁₂ = G₁₂ + (c/λ₁)∫ₓ¹ Ǧ₁₂ gives Ǧ₁₂(x) = G₁₂ e^{c(1−x)/λ₁}.
        let model = demo_model();
        let g1 = Matrix::from_row_slice(2, 2, &[0.3, 0.5, 0.2, 0.1]);
        let npts = 201;
        let c = coupling_with(2, npts, g1, Matrix::zeros(2, 2));
        let grid = TriGrid::new(npts).unwrap();
        let k = solve_control_kernels(&model, &c, grid).unwrap();
        let mut worst: f64 = 0.0;
        for a in 0..npts {
            let exact = 0.5 * (0.3 * (1.0 - grid.x(a)) / 2.0).exp();
            worst = worst.max((k.g_check.at(a)[(0, 1)] - exact).abs());
        }
        assert!(worst <= 1e-6, "{worst:e}");
        for a in 0..npts {
            let v = k.g_check.at(a);
            assert!(v[(0, 0)] == 0.0 && v[(1, 0)] == 0.0 && v[(1, 1)] == 0.0);
            for b in a..npts {
                assert_eq!(k.l_check.entry(a, b, 0, 1), 0.0);
            }
            for b in 0..npts {
                let lb = k.l_bar.get(a, b);
                assert!(lb[(0, 0)] == 0.0 && lb[(1, 0)] == 0.0 && lb[(1, 1)] == 0.0);
                assert_eq!(k.l_bar.get(npts - 1, b)[(0, 1)], 0.0);
            }
        }
    }
}
