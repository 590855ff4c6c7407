//! Semi-Lagrangian stepping shared by the plant, the target systems and the observer.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{GridField, PlantModel, PlantState};
use crate::numerics::{trapezoid_weights, Matrix, SampledFunction};

/// Linear interpolation stencil `(k, f)`: `(1−f)·v[k] + f·v[k+1]`.
type Stencil = (usize, f64);

fn stencil(x: f64, h: f64, last: usize) -> Stencil {
    let s = (x / h).clamp(0.0, last as f64);
    let k = (s.floor() as usize).min(last - 1);
    let f = s - k as f64;
    if f < 1e-12 {
        (k, 0.0)
    } else if f > 1.0 - 1e-12 {
        (k + 1, 0.0)
    } else {
        (k, f)
    }
}

#[inline]
fn read(v: &[f64], (k, f): Stencil) -> f64 {
    if f == 0.0 {
        v[k]
    } else {
        v[k] * (1.0 - f) + v[k + 1] * f
    }
}

/// Traces of one family of components (all rightward or all leftward) over one step `dt`.
#[derive(Debug, Clone)]
pub(crate) struct Advection {
    n_grid: usize,
    rightward: bool,
    foot: Vec<Vec<Stencil>>,
    mid: Vec<Vec<Stencil>>,
    mid_x: Vec<Vec<f64>>,
}

impl Advection {
    pub fn new(speeds: &[f64], rightward: bool, n_grid: usize, dt: f64) -> Result<Self> {
        let h = 1.0 / (n_grid - 1) as f64;
        let last = n_grid - 1;
        let vmax = speeds.iter().fold(0.0_f64, |a, b| a.max(*b));
        if dt <= 0.0 || vmax * dt > h * (1.0 + 1e-9) {
            return Err(Error::Precondition(format!(
                "CFL violated: dt = {dt}, h = {h}, max speed = {vmax}"
            )));
        }
        let dir = if rightward { -1.0 } else { 1.0 };
        let mut foot = Vec::new();
        let mut mid = Vec::new();
        let mut mid_x = Vec::new();
        for &s in speeds {
            let xs: Vec<f64> = (0..n_grid).map(|a| a as f64 * h).collect();
            foot.push(xs.iter().map(|x| stencil(x + dir * s * dt, h, last)).collect());
            let mx: Vec<f64> = xs.iter().map(|x| (x + dir * 0.5 * s * dt).clamp(0.0, 1.0)).collect();
            mid.push(mx.iter().map(|x| stencil(*x, h, last)).collect());
            mid_x.push(mx);
        }
        Ok(Self {
            n_grid,
            rightward,
            foot,
            mid,
            mid_x,
        })
    }

    /// Nodes updated by transport; the remaining one is the inflow boundary.
    pub fn interior(&self) -> std::ops::Range<usize> {
        if self.rightward {
            1..self.n_grid
        } else {
            0..self.n_grid - 1
        }
    }

    pub fn mid_x(&self, c: usize, a: usize) -> f64 {
        self.mid_x[c][a]
    }

    /// Transports every component of `old` and adds `dt·src(c, a)`; inflow nodes are left as in
    /// `old`.
    pub fn transport(&self, old: &GridField, dt: f64, src: impl Fn(usize, usize) -> f64) -> GridField {
        let mut out = old.clone();
        for c in 0..old.comps() {
            let v = old.comp(c);
            let feet = &self.foot[c];
            let w = out.comp_mut(c);
            for a in self.interior() {
                w[a] = read(v, feet[a]);
            }
            for a in self.interior() {
                w[a] += dt * src(c, a);
            }
        }
        out
    }

    /// Value of component `comp` of `field` at the midpoint of the trace ending at node `a` of
    /// component `c` of this family.
    #[inline]
    pub fn at_mid(&self, field: &GridField, comp: usize, c: usize, a: usize) -> f64 {
        read(field.comp(comp), self.mid[c][a])
    }
}

/// Classical RK4 for `ż = Az + f(s)` with `f` linear in time between `f0` and `f1`.
pub fn rk4_linear(a: &Matrix, z: &DVector<f64>, f0: &DVector<f64>, f1: &DVector<f64>, dt: f64) -> DVector<f64> {
    let fm = (f0 + f1) * 0.5;
    let k1 = a * z + f0;
    let k2 = a * (z + &k1 * (0.5 * dt)) + &fm;
    let k3 = a * (z + &k2 * (0.5 * dt)) + &fm;
    let k4 = a * (z + &k3 * dt) + f1;
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One-step integrator of the plant.
#[derive(Debug, Clone)]
pub struct PlantStepper {
    model: PlantModel,
    dt: f64,
    adv_u: Advection,
    adv_v: Advection,
    /// `Σ` rows at the trace midpoints: `[c][a]` holds row `c` of the stacked coupling.
    sig_u: Vec<Vec<Vec<f64>>>,
    sig_v: Vec<Vec<Vec<f64>>>,
}

fn rows_at(adv: &Advection, comps: usize, n_grid: usize, offset: usize, model: &PlantModel) -> Vec<Vec<Vec<f64>>> {
    (0..comps)
        .map(|c| {
            (0..n_grid)
                .map(|a| {
                    let s = model.sigma_at(adv.mid_x(c, a));
                    s.row(offset + c).iter().copied().collect()
                })
                .collect()
        })
        .collect()
}

impl PlantStepper {
    pub fn new(model: &PlantModel, n_grid: usize, dt: f64) -> Result<Self> {
        let adv_u = Advection::new(&model.lambda, true, n_grid, dt)?;
        let adv_v = Advection::new(&model.mu, false, n_grid, dt)?;
        let sig_u = rows_at(&adv_u, model.n, n_grid, 0, model);
        let sig_v = rows_at(&adv_v, model.m, n_grid, model.n, model);
        Ok(Self {
            model: model.clone(),
            dt,
            adv_u,
            adv_v,
            sig_u,
            sig_v,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` by `dt` with `u_next = U(t + dt)` entering the `x = 0` boundary.
    pub fn step(&self, state: &PlantState, u_next: &DVector<f64>) -> PlantState {
        let mut next = self.advance(state);
        self.close(&mut next, u_next);
        next
    }

    /// Sets the actuated boundary `u(t,0) = C₀X₀ + Qv(t,0) + U` of an advanced state.
    pub fn close(&self, state: &mut PlantState, u_next: &DVector<f64>) {
        let md = &self.model;
        let v0 = state.v.node(0);
        let u0 = &md.c0 * &state.x0 + &md.q_mat * v0 + u_next;
        state.u.set_node(0, &u0);
    }

    /// Everything of [`step`](Self::step) except the actuated boundary, which keeps its old value.
    pub fn advance(&self, state: &PlantState) -> PlantState {
        let md = &self.model;
        let (n, m) = (md.n, md.m);
        let last = state.u.n_grid() - 1;
        let coupled = |adv: &Advection, rows: &Vec<Vec<Vec<f64>>>, c: usize, a: usize| {
            let row = &rows[c][a];
            let mut acc = 0.0;
            for (k, s) in row.iter().enumerate() {
                if *s != 0.0 {
                    acc += s * if k < n {
                        adv.at_mid(&state.u, k, c, a)
                    } else {
                        adv.at_mid(&state.v, k - n, c, a)
                    };
                }
            }
            acc
        };
        let u = self.adv_u.transport(&state.u, self.dt, |c, a| coupled(&self.adv_u, &self.sig_u, c, a));
        let mut v = self.adv_v.transport(&state.v, self.dt, |c, a| coupled(&self.adv_v, &self.sig_v, c, a));

        let trace = |f: &GridField, k: usize, c: usize| DVector::from_iterator(c, (0..c).map(|i| f.get(i, k)));
        let x0 = rk4_linear(
            &md.a0,
            &state.x0,
            &(&md.e0 * trace(&state.v, 0, m)),
            &(&md.e0 * trace(&v, 0, m)),
            self.dt,
        );
        let x1 = rk4_linear(
            &md.a1,
            &state.x1,
            &(&md.e1 * trace(&state.u, last, n)),
            &(&md.e1 * trace(&u, last, n)),
            self.dt,
        );
        let v1 = &md.r * trace(&u, last, n) + &md.c1 * &x1;
        for j in 0..m {
            v.set(j, last, v1[j]);
        }
        PlantState { x0, u, v, x1 }
    }
}

/// Advances the plant by one step.
pub fn step_plant(model: &PlantModel, state: &PlantState, u_next: &DVector<f64>, dt: f64) -> Result<PlantState> {
    state.check()?;
    Ok(PlantStepper::new(model, state.u.n_grid(), dt)?.step(state, u_next))
}

/// PDE part of either target system:
/// `α_t + Λ⁺α_x = G_α(x)s(t)`, `β_t − Λ⁻β_x = G₂(x)y(t)`, `β(t,1) = Rα(t,1)`,
/// `α(t,0) = Qβ(t,0) + C₀ξ + ΓX₁ + ∫F_α α + ∫F_β β + e(t)`.
#[derive(Debug, Clone)]
pub(crate) struct TargetStepper {
    n: usize,
    m: usize,
    p: usize,
    dt: f64,
    adv_a: Advection,
    adv_b: Advection,
    ga: Vec<Vec<DVector<f64>>>,
    gb: Vec<Vec<DVector<f64>>>,
    c0: Matrix,
    gamma0: Matrix,
    q: Matrix,
    r: Matrix,
    fa_w: Vec<Matrix>,
    fb_w: Vec<Matrix>,
    bc_solve: Matrix,
}

impl TargetStepper {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &PlantModel,
        n_grid: usize,
        dt: f64,
        g_alpha: &SampledFunction,
        g2: &SampledFunction,
        f_alpha: &SampledFunction,
        f_beta: &SampledFunction,
        gamma0: &Matrix,
    ) -> Result<Self> {
        let adv_a = Advection::new(&model.lambda, true, n_grid, dt)?;
        let adv_b = Advection::new(&model.mu, false, n_grid, dt)?;
        let row_at = |f: &SampledFunction, adv: &Advection, c: usize, a: usize| {
            DVector::from_iterator(f.shape().1, f.eval(adv.mid_x(c, a)).row(c).iter().copied())
        };
        let ga = (0..model.n)
            .map(|c| (0..n_grid).map(|a| row_at(g_alpha, &adv_a, c, a)).collect())
            .collect();
        let gb = (0..model.m)
            .map(|c| (0..n_grid).map(|a| row_at(g2, &adv_b, c, a)).collect())
            .collect();
        let grid = crate::numerics::uniform_grid(n_grid, 0.0, 1.0);
        let w = trapezoid_weights(&grid);
        let fa_w: Vec<Matrix> = grid.iter().zip(&w).map(|(x, wx)| f_alpha.eval(*x) * *wx).collect();
        let fb_w: Vec<Matrix> = grid.iter().zip(&w).map(|(x, wx)| f_beta.eval(*x) * *wx).collect();
        let bc_solve = (Matrix::identity(model.n, model.n) - &fa_w[0])
            .try_inverse()
            .ok_or_else(|| Error::Consistency("x = 0 boundary relation is singular".into()))?;
        Ok(Self {
            n: model.n,
            m: model.m,
            p: model.p,
            dt,
            adv_a,
            adv_b,
            ga,
            gb,
            c0: model.c0.clone(),
            gamma0: gamma0.clone(),
            q: model.q_mat.clone(),
            r: model.r.clone(),
            fa_w,
            fb_w,
            bc_solve,
        })
    }

    /// Interior transport with the source signals frozen at their step averages `s_mid`, `y_mid`.
    pub fn interior(
        &self,
        alpha: &GridField,
        beta: &GridField,
        s_mid: &DVector<f64>,
        y_mid: &DVector<f64>,
    ) -> (GridField, GridField) {
        let a = self.adv_a.transport(alpha, self.dt, |c, k| self.ga[c][k].dot(s_mid));
        let b = self.adv_b.transport(beta, self.dt, |c, k| self.gb[c][k].dot(y_mid));
        (a, b)
    }

    /// Sets the inflow nodes given the new ODE state `z = (ξ, X₁)` and the extra boundary input.
    pub fn boundaries(&self, alpha: &mut GridField, beta: &mut GridField, z: &DVector<f64>, extra: &DVector<f64>) {
        let (n, m, p) = (self.n, self.m, self.p);
        let last = alpha.n_grid() - 1;
        let a1 = DVector::from_iterator(n, (0..n).map(|i| alpha.get(i, last)));
        let b1 = &self.r * a1;
        for j in 0..m {
            beta.set(j, last, b1[j]);
        }
        let xi = z.rows(0, p).into_owned();
        let x1 = z.rows(p, z.len() - p).into_owned();
        let b0 = DVector::from_iterator(m, (0..m).map(|j| beta.get(j, 0)));
        let mut rhs = &self.q * b0 + &self.c0 * xi + &self.gamma0 * x1 + extra;
        for k in 0..=last {
            let bk = beta.node(k);
            rhs += &self.fb_w[k] * bk;
            if k > 0 {
                rhs += &self.fa_w[k] * alpha.node(k);
            }
        }
        let a0 = &self.bc_solve * rhs;
        for i in 0..n {
            alpha.set(i, 0, a0[i]);
        }
    }
}
