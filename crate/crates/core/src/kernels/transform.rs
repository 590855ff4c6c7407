//! The transforms `T` and `T₁` acting on gridded states.
//!
//! Target-side states reuse [`PlantState`]: `x0` holds `ξ`, `u` holds `α` (or `ᾱ`), `v` holds `β`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels::control::KernelSetControl;
use crate::kernels::observer::KernelSetObserver;
use crate::model::{GridField, PlantState};
use crate::numerics::{
    trapezoid_weights, volterra2_solve, GridKernel, Matrix, SampledFunction, VolterraBounds,
};

/// Weights of the composite trapezoid rule on `[x_a, 1]` of a uniform grid with `n` points.
pub(crate) fn tail_weights(n: usize, a: usize, h: f64) -> impl Iterator<Item = (usize, f64)> {
    let len = n - a;
    (a..n).map(move |b| {
        let w = if len < 2 {
            0.0
        } else if b == a || b == n - 1 {
            0.5 * h
        } else {
            h
        };
        (b, w)
    })
}

fn check_grid(npts: usize, state: &PlantState, n: usize, m: usize) -> Result<()> {
    state.check()?;
    if state.u.n_grid() != npts || state.u.comps() != n || state.v.comps() != m {
        return Err(Error::Dimension(format!(
            "state has {}+{} components on {} nodes, kernels expect {n}+{m} on {npts}",
            state.u.comps(),
            state.v.comps(),
            state.u.n_grid()
        )));
    }
    Ok(())
}

fn stacked(state: &PlantState, k: usize) -> DVector<f64> {
    let (n, m) = (state.u.comps(), state.v.comps());
    DVector::from_iterator(
        n + m,
        (0..n).map(|c| state.u.get(c, k)).chain((0..m).map(|c| state.v.get(c, k))),
    )
}

fn set_stacked(state: &mut PlantState, k: usize, w: &DVector<f64>) {
    let n = state.u.comps();
    for c in 0..n {
        state.u.set(c, k, w[c]);
    }
    for c in 0..state.v.comps() {
        state.v.set(c, k, w[n + c]);
    }
}

/// `∫₀¹ L₁α + L₂β`.
fn ode_integral(k: &KernelSetObserver, state: &PlantState) -> DVector<f64> {
    let w = trapezoid_weights(k.l1.grid());
    let mut acc = DVector::zeros(k.l1.shape().0);
    for (b, wb) in w.iter().enumerate() {
        let alpha = state.u.node(b);
        let beta = state.v.node(b);
        acc += (k.l1.at(b) * alpha + k.l2.at(b) * beta) * *wb;
    }
    acc
}

/// `(X₀, u, v, X₁) = T(ξ, α, β, X₁)`.
pub fn apply_t(k: &KernelSetObserver, target: &PlantState) -> Result<PlantState> {
    let npts = k.grid.n();
    let h = k.grid.h();
    check_grid(npts, target, k.n, k.m)?;
    let width = k.width();
    let mut out = target.clone();
    let nodes: Vec<DVector<f64>> = (0..npts).map(|b| stacked(target, b)).collect();
    for a in 0..npts {
        let mut v = &nodes[a] + k.gamma.at(a) * &target.x1;
        for (b, wb) in tail_weights(npts, a, h) {
            if wb == 0.0 {
                continue;
            }
            let blk = k.l.block(a, b);
            for i in 0..width {
                let mut acc = 0.0;
                for j in 0..width {
                    acc += blk[i * width + j] * nodes[b][j];
                }
                v[i] -= wb * acc;
            }
        }
        set_stacked(&mut out, a, &v);
    }
    out.x0 = &target.x0 - ode_integral(k, target);
    Ok(out)
}

/// `(ξ, α, β, X₁) = T⁻¹(X₀, u, v, X₁)`: the PDE block is a Volterra operator, the ODE block is
/// recovered directly.
pub fn invert_t(k: &KernelSetObserver, physical: &PlantState) -> Result<PlantState> {
    let npts = k.grid.n();
    check_grid(npts, physical, k.n, k.m)?;
    let width = k.width();
    let forcing = SampledFunction::new(
        k.grid.points(),
        (0..npts)
            .map(|a| {
                let v = stacked(physical, a) - k.gamma.at(a) * &physical.x1;
                Matrix::from_column_slice(width, 1, v.as_slice())
            })
            .collect(),
    )?;
    let w = volterra2_solve(&k.l, &forcing, VolterraBounds::Upper)?;
    let mut out = physical.clone();
    for a in 0..npts {
        set_stacked(&mut out, a, &DVector::from_column_slice(w.at(a).as_slice()));
    }
    out.x0 = &physical.x0 + ode_integral(k, &out);
    Ok(out)
}

/// `ξ` of [`invert_t`] as a linear functional of the physical state:
/// `ξ = X₀ + Σ_a W_a (u, v)(x_a) + W_X X₁`.
#[derive(Debug, Clone)]
pub struct XiFunctional {
    /// `p×(n+m)` per node.
    pub nodes: Vec<Matrix>,
    /// `p×q`.
    pub x1: Matrix,
}

impl XiFunctional {
    pub fn eval(&self, state: &PlantState) -> DVector<f64> {
        let mut acc = &state.x0 + &self.x1 * &state.x1;
        for (a, w) in self.nodes.iter().enumerate() {
            acc += w * stacked(state, a);
        }
        acc
    }
}

/// Solves the transposed discrete Volterra system behind [`invert_t`] by forward substitution, so
/// that `ξ` costs one pass over the state.
pub fn xi_functional(k: &KernelSetObserver) -> Result<XiFunctional> {
    let npts = k.grid.n();
    let h = k.grid.h();
    let width = k.width();
    let p = k.l1.shape().0;
    let w = trapezoid_weights(k.l1.grid());
    let block = |a: usize, b: usize| Matrix::from_row_slice(width, width, k.l.block(a, b));
    // c (I − 𝓛) = ℓ, column by column in b.
    let mut c: Vec<Matrix> = Vec::with_capacity(npts);
    for b in 0..npts {
        let mut ell = Matrix::zeros(p, width);
        ell.view_mut((0, 0), (p, k.n)).copy_from(&(k.l1.at(b) * w[b]));
        ell.view_mut((0, k.n), (p, k.m)).copy_from(&(k.l2.at(b) * w[b]));
        let mut diag = Matrix::identity(width, width);
        for a in 0..=b {
            let wab = tail_weights(npts, a, h).find(|(bb, _)| *bb == b).map_or(0.0, |(_, x)| x);
            if wab == 0.0 {
                continue;
            }
            if a == b {
                diag -= block(a, b) * wab;
            } else {
                ell += &c[a] * block(a, b) * wab;
            }
        }
        let inv = diag
            .try_inverse()
            .ok_or_else(|| Error::Consistency("singular diagonal in the transform".into()))?;
        c.push(ell * inv);
    }
    let mut x1 = Matrix::zeros(p, k.gamma.shape().1);
    for (a, ca) in c.iter().enumerate() {
        x1 -= ca * k.gamma.at(a);
    }
    Ok(XiFunctional { nodes: c, x1 })
}

/// `f − ∫ₓ¹ K(x,y) f(y) dy` for a triangle kernel.
fn volterra_apply(k: &GridKernel, f: &GridField, h: f64) -> GridField {
    let npts = f.n_grid();
    let n = f.comps();
    let mut out = f.clone();
    for a in 0..npts {
        for (b, wb) in tail_weights(npts, a, h) {
            if wb == 0.0 {
                continue;
            }
            let blk = k.block(a, b);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += blk[i * n + j] * f.get(j, b);
                }
                out.set(i, a, out.get(i, a) - wb * acc);
            }
        }
    }
    out
}

/// `∫₀¹ K(x,y) f(y) dy` for a full-square kernel.
fn fredholm_apply(k: &GridKernel, f: &GridField, w: &[f64]) -> GridField {
    let npts = f.n_grid();
    let n = f.comps();
    let mut out = GridField::zeros(n, npts);
    for a in 0..npts {
        for (b, wb) in w.iter().enumerate() {
            let blk = k.block(a, b);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += blk[i * n + j] * f.get(j, b);
                }
                out.set(i, a, out.get(i, a) + wb * acc);
            }
        }
    }
    out
}

/// `(ξ, α, β, X₁)` from `(ξ, ᾱ, β, X₁)`: `α̌ = ᾱ − ∫₀¹ L̄ ᾱ`, then `α = α̌ − ∫ₓ¹ Ľ α̌`.
pub fn apply_t1(k: &KernelSetControl, bar: &PlantState) -> Result<PlantState> {
    let npts = k.grid.n();
    check_grid(npts, bar, k.n, bar.v.comps())?;
    let w = trapezoid_weights(&k.grid.points());
    let mut check = bar.u.clone();
    check.axpy(-1.0, &fredholm_apply(&k.l_bar, &bar.u, &w));
    let mut out = bar.clone();
    out.u = volterra_apply(&k.l_check, &check, k.grid.h());
    Ok(out)
}

/// Inverse of [`apply_t1`]: a Volterra solve for `α̌`, then the finite Neumann series of the
/// nilpotent operator `L̄`.
pub fn invert_t1(k: &KernelSetControl, state: &PlantState) -> Result<PlantState> {
    let npts = k.grid.n();
    let n = k.n;
    check_grid(npts, state, n, state.v.comps())?;
    let forcing = SampledFunction::new(
        k.grid.points(),
        (0..npts)
            .map(|a| Matrix::from_iterator(n, 1, (0..n).map(|c| state.u.get(c, a))))
            .collect(),
    )?;
    let sol = volterra2_solve(&k.l_check, &forcing, VolterraBounds::Upper)?;
    let mut check = GridField::zeros(n, npts);
    for a in 0..npts {
        for c in 0..n {
            check.set(c, a, sol.at(a)[(c, 0)]);
        }
    }
    let w = trapezoid_weights(&k.grid.points());
    let mut bar = check.clone();
    let mut term = check;
    for _ in 1..n {
        term = fredholm_apply(&k.l_bar, &term, &w);
        bar.axpy(1.0, &term);
    }
    let mut out = state.clone();
    out.u = bar;
    Ok(out)
}
