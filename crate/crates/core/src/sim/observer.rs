use nalgebra::DVector;

use crate::delayform::compute_y1;
use crate::error::Result;
use crate::model::{GridField, PlantState};
use crate::sim::transport::{rk4_linear, TargetStepper};
use crate::sim::HistoryBuffer;
use crate::synthesis::FullSynthesis;

/// Observer in target coordinates: a copy of the observer target system driven by the measured
/// `y`, with `O₀[ỹ]` added at `x = 0` and, once the measurement history spans the delay form,
/// output injection on `Ẑ`.
#[derive(Debug, Clone)]
pub struct Observer {
    stepper: TargetStepper,
    syn: FullSynthesis,
    alpha: GridField,
    beta: GridField,
    z: DVector<f64>,
    y: HistoryBuffer,
    u: HistoryBuffer,
    innovation: HistoryBuffer,
    t: f64,
    injection_from: f64,
}

impl Observer {
    /// Starts at rest at `t0` with the first measurement `y0`; [`close`](Self::close) then takes the
    /// first input.
    pub fn new(syn: &FullSynthesis, n_grid: usize, dt: f64, t0: f64, y0: &DVector<f64>) -> Result<Self> {
        let md = &syn.model;
        let c = &syn.coupling;
        let stepper = TargetStepper::new(md, n_grid, dt, &c.g1, &c.g2, &c.f_alpha, &c.f_beta, &c.gamma0)?;
        let span = syn.observer_form.horizon + 4.0 * dt;
        let mut y = HistoryBuffer::new(md.n, dt, span, t0, false);
        let u = HistoryBuffer::new(md.n, dt, span, t0, false);
        let mut innovation = HistoryBuffer::new(md.n, dt, span, t0, true);
        y.push(t0, y0.clone())?;
        innovation.push(t0, -y0)?;
        Ok(Self {
            stepper,
            syn: syn.clone(),
            alpha: GridField::zeros(md.n, n_grid),
            beta: GridField::zeros(md.m, n_grid),
            z: DVector::zeros(md.p + md.q),
            y,
            u,
            innovation,
            t: t0,
            injection_from: t0 + syn.observer_form.horizon + 2.0 * dt,
        })
    }

    /// Overwrites the current estimate, e.g. to start from a known target state.
    pub fn set_estimate(&mut self, target: &PlantState) {
        let p = self.syn.model.p;
        self.z.rows_mut(0, p).copy_from(&target.x0);
        self.z.rows_mut(p, self.syn.model.q).copy_from(&target.x1);
        self.alpha = target.u.clone();
        self.beta = target.v.clone();
        let last = self.alpha.n_grid() - 1;
        if let Some(y) = self.y.latest() {
            let innovation = self.alpha.node(last) - y;
            let _ = self.innovation.overwrite_latest(innovation);
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Whether output injection on `Ẑ` is running.
    pub fn injecting(&self) -> bool {
        self.t >= self.injection_from
    }

    /// Latest `ỹ = α̂(·, 1) − y`.
    pub fn innovation(&self) -> DVector<f64> {
        self.innovation.latest().cloned().unwrap_or_else(|| DVector::zeros(self.syn.model.n))
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    /// `(ξ̂, α̂, β̂, X̂₁)` as a target-coordinate state.
    pub fn estimate(&self) -> PlantState {
        let p = self.syn.model.p;
        PlantState {
            x0: self.z.rows(0, p).into_owned(),
            u: self.alpha.clone(),
            v: self.beta.clone(),
            x1: self.z.rows(p, self.syn.model.q).into_owned(),
        }
    }

    /// `G_Z y − L_o(y₁ + D[y])` at `t`, or `G_Z y` without injection.
    fn forcing(&self, t: f64, inject: bool) -> Result<DVector<f64>> {
        let obs = &self.syn.observer;
        let y = self.y.at(t)?;
        let mut f = &obs.g_z * &y;
        if inject {
            let y1 = compute_y1(&self.syn.observer_form, &self.y, &self.u, t)?;
            let d = obs.duhamel.apply(&self.y, t)?;
            f -= &obs.l_o * (y1 + d);
        }
        Ok(f)
    }

    /// Advances to `t + dt` given `y(t + dt)`; the `x = 0` boundary waits for [`close`](Self::close).
    pub fn advance(&mut self, y_next: &DVector<f64>) -> Result<()> {
        let dt = self.y.dt();
        let t_next = self.t + dt;
        let y_now = self.y.at(self.t)?;
        let y_mid = (&y_now + y_next) * 0.5;
        let (alpha, beta) = self.stepper.interior(&self.alpha, &self.beta, &y_mid, &y_mid);
        self.y.push(t_next, y_next.clone())?;
        let inject = self.injecting();
        let obs = &self.syn.observer;
        let a = if inject { &obs.a_o + &obs.l_o * &obs.c_eff } else { obs.a_o.clone() };
        let f0 = self.forcing(self.t, inject)?;
        let f1 = self.forcing(t_next, inject)?;
        self.z = rk4_linear(&a, &self.z, &f0, &f1, dt);
        self.alpha = alpha;
        self.beta = beta;
        let last = self.alpha.n_grid() - 1;
        self.innovation.push(t_next, self.alpha.node(last) - y_next)?;
        self.t = t_next;
        Ok(())
    }

    /// Sets `α̂(t,0)` with the input `U(t)` applied to the plant, plus `O₀[ỹ]`.
    pub fn close(&mut self, u_now: &DVector<f64>) -> Result<()> {
        self.u.push(self.t, u_now.clone())?;
        let extra = u_now + self.syn.observer.o0.apply(&self.innovation, self.t)?;
        self.stepper.boundaries(&mut self.alpha, &mut self.beta, &self.z, &extra);
        Ok(())
    }
}
