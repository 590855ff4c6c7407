use crate::error::{Error, Result};
use crate::kernels::grid::{interp_nodes, TriGrid};
use crate::model::PlantModel;
use crate::numerics::{GridKernel, Matrix, SampledFunction};

pub const KERNEL_TOL: f64 = 1e-9;
pub const KERNEL_MAX_SWEEPS: usize = 300;

/// Kernels of the observer-side transform `(X₀,u,v,X₁) = T(ξ,α,β,X₁)`.
///
/// `l` stacks `[Lαα Lαβ; Lβα Lββ]` and is only meaningful on nodes `a ≤ b`; `gamma` stacks
/// `[γ_α; γ_β]`.
#[derive(Debug, Clone)]
pub struct KernelSetObserver {
    pub grid: TriGrid,
    pub n: usize,
    pub m: usize,
    pub l: GridKernel,
    pub gamma: SampledFunction,
    pub l1: SampledFunction,
    pub l2: SampledFunction,
    pub sweeps: usize,
    pub residual: f64,
}

impl KernelSetObserver {
    pub fn width(&self) -> usize {
        self.n + self.m
    }

    pub fn gamma_alpha(&self) -> SampledFunction {
        let n = self.n;
        self.gamma.map(|g| g.rows(0, n).into_owned())
    }

    pub fn gamma_beta(&self) -> SampledFunction {
        let (n, m) = (self.n, self.m);
        self.gamma.map(|g| g.rows(n, m).into_owned())
    }

    /// `L(x_a, ν_b)` restricted to rows `r0..r0+nr` and columns `c0..c0+nc`.
    pub fn l_block(&self, a: usize, b: usize, r0: usize, nr: usize, c0: usize, nc: usize) -> Matrix {
        Matrix::from_fn(nr, nc, |i, j| self.l.entry(a, b, r0 + i, c0 + j))
    }

    /// `max_x ‖Λ L(x,x) − L(x,x) Λ − Σ(x)‖_max` over diagonal nodes.
    pub fn jump_residual(&self, model: &PlantModel) -> f64 {
        let speeds = model.signed_speeds();
        let w = self.width();
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.n() {
            let sig = model.sigma_at(self.grid.x(k));
            for i in 0..w {
                for j in 0..w {
                    let r = (speeds[i] - speeds[j]) * self.l.entry(k, k, i, j) - sig[(i, j)];
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Diagonal,
    Left,
    Top,
}

/// One kernel entry together with the orientation of its characteristic towards its data.
#[derive(Debug, Clone, Copy)]
struct Characteristic {
    i: usize,
    j: usize,
    /// `+1` if the data lie forward along `(Λ_i, Λ_j)`, `−1` if backward.
    toward: f64,
    wx: f64,
    wnu: f64,
}

impl Characteristic {
    fn new(i: usize, j: usize, speeds: &[f64], toward: f64) -> Self {
        Self {
            i,
            j,
            toward,
            wx: toward * speeds[i],
            wnu: toward * speeds[j],
        }
    }

    fn x_dominant(&self) -> bool {
        self.wx.abs() >= self.wnu.abs()
    }
}

/// Integrates one entry of `L` over the triangle.
///
/// The entry splits into its datum, transported exactly from the edge where the characteristic
/// through the node starts, plus the integral of the frozen source `s` along that characteristic.
/// Only the integral part (continuous, zero on the data edges) is marched line by line, so the
/// discontinuities leaving the corners are not smeared by interpolation.
fn march(
    grid: &TriGrid,
    c: Characteristic,
    l: &mut GridKernel,
    s: &GridKernel,
    scratch: &mut [f64],
    datum: impl Fn(Edge, f64) -> f64,
) {
    let n = grid.n();
    let h = grid.h();
    let last = n - 1;
    let (i, j) = (c.i, c.j);
    let s_edge = |edge: Edge, pos: f64| -> f64 {
        match edge {
            Edge::Diagonal => interp_nodes(|k| s.entry(k, k, i, j), pos, h, 0, last),
            Edge::Left => interp_nodes(|k| s.entry(0, k, i, j), pos, h, 0, last),
            Edge::Top => interp_nodes(|k| s.entry(k, last, i, j), pos, h, 0, last),
        }
    };
    let step = h / c.wx.abs().max(c.wnu.abs());
    let ds_sign = -c.toward;

    let visit = |a: usize, b: usize, l: &mut GridKernel, integral: &mut [f64]| {
        let (x, nu) = (grid.x(a), grid.x(b));
        let mut best: Option<(f64, Edge, f64)> = None;
        let mut offer = |sigma: f64, edge: Edge, pos: f64| {
            if best.is_none_or(|(bs, _, _)| sigma < bs) {
                best = Some((sigma, edge, pos));
            }
        };
        if c.wx - c.wnu > 0.0 {
            let sigma = (nu - x) / (c.wx - c.wnu);
            offer(sigma, Edge::Diagonal, x + sigma * c.wx);
        }
        if c.wx < 0.0 {
            let sigma = x / -c.wx;
            offer(sigma, Edge::Left, nu + sigma * c.wnu);
        }
        if c.wnu > 0.0 {
            let sigma = (1.0 - nu) / c.wnu;
            offer(sigma, Edge::Top, x + sigma * c.wx);
        }
        let (sigma_e, edge, pos) = best.expect("every characteristic reaches a data edge");
        let s_here = s.entry(a, b, i, j);
        // P = F + s·(Λ_i, Λ_j) with F = P + σ·toward·(Λ_i, Λ_j).
        let int = if sigma_e <= step * (1.0 + 1e-10) {
            ds_sign * sigma_e * 0.5 * (s_here + s_edge(edge, pos))
        } else if c.x_dominant() {
            let a2 = if c.wx > 0.0 { a + 1 } else { a - 1 };
            let p = nu + step * c.wnu;
            let fi = interp_nodes(|k| integral[a2 * n + k], p, h, a2, last);
            let fs = interp_nodes(|k| s.entry(a2, k, i, j), p, h, a2, last);
            fi + ds_sign * step * 0.5 * (s_here + fs)
        } else {
            let b2 = if c.wnu > 0.0 { b + 1 } else { b - 1 };
            let p = x + step * c.wx;
            let fi = interp_nodes(|k| integral[k * n + b2], p, h, 0, b2);
            let fs = interp_nodes(|k| s.entry(k, b2, i, j), p, h, 0, b2);
            fi + ds_sign * step * 0.5 * (s_here + fs)
        };
        integral[a * n + b] = int;
        l.set_entry(a, b, i, j, datum(edge, pos) + int);
    };

    if c.x_dominant() {
        let rows: Box<dyn Iterator<Item = usize>> = if c.wx > 0.0 {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for a in rows {
            for b in a..n {
                visit(a, b, l, scratch);
            }
        }
    } else {
        let cols: Box<dyn Iterator<Item = usize>> = if c.wnu > 0.0 {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for b in cols {
            for a in 0..=b {
                visit(a, b, l, scratch);
            }
        }
    }
}

/// `S(a,b) = Σ(x_a) L(a,b)` on the triangle.
fn source(sigma: &[Matrix], l: &GridKernel, out: &mut GridKernel) {
    let n = l.n();
    let w = l.shape().0;
    for a in 0..n {
        let sig = &sigma[a];
        for b in a..n {
            let blk = l.block(a, b);
            for i in 0..w {
                for j in 0..w {
                    let mut acc = 0.0;
                    for k in 0..w {
                        let sv = sig[(i, k)];
                        if sv != 0.0 {
                            acc += sv * blk[k * w + j];
                        }
                    }
                    out.set_entry(a, b, i, j, acc);
                }
            }
        }
    }
}

/// Classical RK4 for `y' = f(k, θ, y)` on grid nodes, where `θ ∈ {0, ½, 1}` locates the stage
/// inside step `k → k+1`.
fn rk4_nodes(
    n: usize,
    h: f64,
    y0: Matrix,
    f: impl Fn(usize, f64, &Matrix) -> Matrix,
) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n);
    let mut y = y0;
    out.push(y.clone());
    for k in 0..n - 1 {
        let k1 = f(k, 0.0, &y);
        let k2 = f(k, 0.5, &(&y + &k1 * (h / 2.0)));
        let k3 = f(k, 0.5, &(&y + &k2 * (h / 2.0)));
        let k4 = f(k, 1.0, &(&y + &k3 * h));
        y = &y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(y.clone());
    }
    out
}

/// `[γ_α; γ_β]` from `Λγ' = Σγ − γA₁`, `γ(1) = [0; C₁]`, integrated from `x = 1` by RK4.
fn solve_gamma(model: &PlantModel, grid: &TriGrid) -> SampledFunction {
    let (n, m, q) = (model.n, model.m, model.q);
    let w = n + m;
    let inv_speed: Vec<f64> = model.signed_speeds().iter().map(|s| 1.0 / s).collect();
    let mut g1 = Matrix::zeros(w, q);
    g1.view_mut((n, 0), (m, q)).copy_from(&model.c1);
    let npts = grid.n();
    let h = grid.h();
    // Integrate in the reversed variable s = 1 − x.
    let rev = rk4_nodes(npts, h, g1, |k, theta, g| {
        let x = 1.0 - (k as f64 + theta) * h;
        let mut d = model.sigma_at(x) * g - g * &model.a1;
        for (r, inv) in inv_speed.iter().enumerate() {
            d.row_mut(r).scale_mut(-inv);
        }
        d
    });
    let values: Vec<Matrix> = rev.into_iter().rev().collect();
    SampledFunction::new(grid.points(), values).expect("gamma grid is valid")
}

/// Solves the observer kernel equations by Picard iteration on their characteristic form.
///
/// Free boundary data are zero. `Lαα_ij` for `i ≤ j` takes its `x = 0` values from the closure
/// `QLβα(0,ν) + C₀L₁(ν)`; at the corner `(0,0)` the diagonal jump value takes precedence.
pub fn solve_observer_kernels(model: &PlantModel, grid: TriGrid) -> Result<KernelSetObserver> {
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    let (n, m, p) = (model.n, model.m, model.p);
    let w = n + m;
    let npts = grid.n();
    let h = grid.h();
    let speeds = model.signed_speeds();
    let sigma: Vec<Matrix> = (0..npts).map(|k| model.sigma_at(grid.x(k))).collect();
    let jump = |x: f64, i: usize, j: usize| {
        interp_nodes(|k| sigma[k][(i, j)], x, h, 0, npts - 1) / (speeds[i] - speeds[j])
    };

    let mut order = Vec::new();
    for i in 0..w {
        for j in 0..w {
            let (ai, aj) = (i < n, j < n);
            let toward = match (ai, aj) {
                (true, false) => 1.0,
                (false, true) => -1.0,
                // Same family: data on the lower-left edges for i ≤ j, upper-right for i > j.
                // For the β family the speeds are negative, so the orientation flips.
                (true, true) => {
                    if i <= j {
                        -1.0
                    } else {
                        1.0
                    }
                }
                (false, false) => {
                    if i <= j {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            order.push((Characteristic::new(i, j, &speeds, toward), ai && aj));
        }
    }

    let inv_lp: Vec<f64> = model.lambda.iter().map(|v| 1.0 / v).collect();
    let inv_lm: Vec<f64> = model.mu.iter().map(|v| 1.0 / v).collect();
    let mut l2_0 = model.e0.clone();
    for (c, inv) in inv_lm.iter().enumerate() {
        l2_0.column_mut(c).scale_mut(*inv);
    }

    let mut l = GridKernel::zeros(npts, w, w);
    let mut s = GridKernel::zeros(npts, w, w);
    let mut scratch = vec![0.0; npts * npts];
    let mut l1: Vec<Matrix> = vec![Matrix::zeros(p, n); npts];
    let mut l2: Vec<Matrix> = vec![l2_0.clone(); npts];
    let mut residual = f64::INFINITY;

    for sweep in 1..=KERNEL_MAX_SWEEPS {
        let prev = l.clone();
        let (prev1, prev2) = (l1.clone(), l2.clone());
        source(&sigma, &l, &mut s);

        for (c, is_aa) in &order {
            if *is_aa {
                continue;
            }
            march(&grid, *c, &mut l, &s, &mut scratch, |edge, pos| match edge {
                Edge::Diagonal => jump(pos, c.i, c.j),
                _ => 0.0,
            });
        }

        let lba0 = |k: usize| Matrix::from_fn(m, n, |r, cc| l.entry(0, k, n + r, cc));
        let lbb0 = |k: usize| Matrix::from_fn(m, m, |r, cc| l.entry(0, k, n + r, n + cc));
        let at = |f: &dyn Fn(usize) -> Matrix, k: usize, theta: f64| -> Matrix {
            if theta == 0.0 {
                f(k)
            } else if theta == 1.0 {
                f(k + 1)
            } else {
                (f(k) + f(k + 1)) * 0.5
            }
        };
        l1 = rk4_nodes(npts, h, Matrix::zeros(p, n), |k, theta, y| {
            let mut d = &model.a0 * y + &model.e0 * at(&lba0, k, theta);
            for (cc, inv) in inv_lp.iter().enumerate() {
                d.column_mut(cc).scale_mut(*inv);
            }
            d
        });
        l2 = rk4_nodes(npts, h, l2_0.clone(), |k, theta, y| {
            let mut d = -(&model.a0 * y) - &model.e0 * at(&lbb0, k, theta);
            for (cc, inv) in inv_lm.iter().enumerate() {
                d.column_mut(cc).scale_mut(*inv);
            }
            d
        });

        let closure: Vec<Matrix> = (0..npts)
            .map(|k| &model.q_mat * lba0(k) + &model.c0 * &l1[k])
            .collect();
        for (c, is_aa) in &order {
            if !*is_aa {
                continue;
            }
            march(&grid, *c, &mut l, &s, &mut scratch, |edge, pos| match edge {
                Edge::Diagonal => jump(pos, c.i, c.j),
                Edge::Left => interp_nodes(|k| closure[k][(c.i, c.j)], pos, h, 0, npts - 1),
                Edge::Top => 0.0,
            });
        }

        let d1 = l1
            .iter()
            .zip(&prev1)
            .chain(l2.iter().zip(&prev2))
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).amax()));
        residual = l.max_abs_diff(&prev).max(d1);
        if !residual.is_finite() {
            break;
        }
        if residual <= KERNEL_TOL {
            let pts = grid.points();
            return Ok(KernelSetObserver {
                grid,
                n,
                m,
                l,
                gamma: solve_gamma(model, &grid),
                l1: SampledFunction::new(pts.clone(), l1)?,
                l2: SampledFunction::new(pts, l2)?,
                sweeps: sweep,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "observer kernel Picard sweeps".into(),
        iterations: KERNEL_MAX_SWEEPS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_model;

    #[test]
    fn zero_coupling_gives_trivial_kernels() {
        let mut model = scalar_model(0.0, 0.0);
        model.a1 = Matrix::zeros(1, 1);
        let k = solve_observer_kernels(&model, TriGrid::new(41).unwrap()).unwrap();
        assert_eq!(k.l.sup_norm(true), 0.0);
        assert_eq!(k.gamma_alpha().sup_norm(), 0.0);
        let c1 = SampledFunction::constant(k.gamma.grid().to_vec(), model.c1.clone());
        assert!(k.gamma_beta().sup_distance(&c1) < 1e-15);
        assert_eq!(k.l1.sup_norm(), 0.0);
    }

    #[test]
    fn l2_closed_form() {
        let model = scalar_model(0.0, 0.0);
        let k = solve_observer_kernels(&model, TriGrid::new(201).unwrap()).unwrap();
        let (a0, e0, mu) = (0.5, 1.0, 1.5);
        let exact = SampledFunction::from_fn(k.grid.points(), |x| {
            Matrix::from_element(1, 1, e0 / mu * (-a0 * x / mu).exp())
        });
        assert!(k.l2.sup_distance(&exact) <= 1e-6);
    }

    #[test]
    fn boundary_conditions_hold() {
        let mut model = scalar_model(0.3, -0.2);
        model.c1 = Matrix::from_element(1, 1, 0.7);
        let k = solve_observer_kernels(&model, TriGrid::new(81).unwrap()).unwrap();
        assert_eq!(k.l1.at(0).amax(), 0.0);
        assert!((k.l2.at(0)[(0, 0)] * 1.5 - 1.0).abs() < 1e-15);
        assert!(k.gamma_alpha().at(80).amax() < 1e-15);
        assert!((k.gamma_beta().at(80)[(0, 0)] - 0.7).abs() < 1e-15);
        assert!(k.jump_residual(&model) < 1e-12);
    }

    #[test]
    fn constant_sigma_pm_refinement_oracle() {
        // Reference: the same solve on a 4× finer grid, sampled back at the coarse nodes.
        let sigma = 0.8;
        let model = scalar_model(sigma, 0.0);
        let coarse = solve_observer_kernels(&model, TriGrid::new(51).unwrap()).unwrap();
        let fine = solve_observer_kernels(&model, TriGrid::new(201).unwrap()).unwrap();
        let mut worst: f64 = 0.0;
        for a in 0..51 {
            for b in a..51 {
                let d = coarse.l.entry(a, b, 0, 1) - fine.l.entry(4 * a, 4 * b, 0, 1);
                worst = worst.max(d.abs());
            }
        }
        assert!(worst <= 4e-3 * sigma, "discrepancy {worst}");
    }
}
