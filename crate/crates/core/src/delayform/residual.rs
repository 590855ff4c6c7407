use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::delayform::{ControlDelayForm, ObserverDelayForm};
use crate::error::{Error, Result};
use crate::kernels::{CouplingFunctions, KernelSetControl};
use crate::model::{GridField, PlantModel};
use crate::sim::transport::{rk4_linear, TargetStepper};
use crate::sim::HistoryBuffer;
use crate::synthesis::build_observer_odes;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualOptions {
    /// End of the simulated interval.
    pub horizon: f64,
    pub seed: u64,
    /// Compare on every `stride`-th step.
    pub stride: usize,
}

impl ResidualOptions {
    /// Three horizons of the form, which leaves two past the start of the comparison window.
    pub fn for_horizon(form_horizon: f64, seed: u64) -> Self {
        Self {
            horizon: 3.0 * form_horizon,
            seed,
            stride: 4,
        }
    }
}

/// Smooth input vanishing to second order at `t = 0`, so that zero initial data stay compatible.
pub(crate) fn smooth_input(n: usize, seed: u64) -> impl Fn(f64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<Vec<(f64, f64, f64)>> = (0..n)
        .map(|_| {
            (0..3)
                .map(|_| (rng.gen_range(0.3..1.0), rng.gen_range(0.5..4.0), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect()
        })
        .collect();
    move |t: f64| {
        let ramp = 1.0 - (-t * t).exp();
        DVector::from_iterator(
            n,
            modes.iter().map(|ms| ramp * ms.iter().map(|(a, w, ph)| a * (w * t + ph).sin()).sum::<f64>()),
        )
    }
}

fn trace(f: &GridField, k: usize) -> DVector<f64> {
    f.node(k)
}

struct Window {
    start: f64,
    err: f64,
    scale: f64,
}

impl Window {
    fn record(&mut self, t: f64, predicted: &DVector<f64>, simulated: &DVector<f64>) {
        if t >= self.start {
            self.err = self.err.max((predicted - simulated).amax());
            self.scale = self.scale.max(simulated.amax());
        }
    }

    fn relative(&self) -> Result<f64> {
        if self.scale == 0.0 {
            return Err(Error::Consistency("residual window saw a zero signal".into()));
        }
        Ok(self.err / self.scale)
    }
}

/// Simulates the observer target system from rest under a random smooth input and returns the
/// largest relative mismatch between `α(t,1)` and its delay-form prediction on
/// `[1.1Θ, horizon]`.
pub fn residual_check_observer(
    form: &ObserverDelayForm,
    model: &PlantModel,
    c: &CouplingFunctions,
    opts: ResidualOptions,
) -> Result<f64> {
    let (n, m, p, q) = (model.n, model.m, model.p, model.q);
    let npts = c.g1.len();
    let h = 1.0 / (npts - 1) as f64;
    let dt = h / model.max_speed();
    let stepper = TargetStepper::new(model, npts, dt, &c.g1, &c.g2, &c.f_alpha, &c.f_beta, &c.gamma0)?;
    let (a_o, g_z) = build_observer_odes(model, c);
    let input = smooth_input(n, opts.seed);
    let span = form.horizon + 2.0 * dt;
    let hist = |d: usize| HistoryBuffer::new(d, dt, span, 0.0, true);
    let (mut yh, mut xih, mut x1h, mut uh) = (hist(n), hist(p), hist(q), hist(n));

    let mut alpha = GridField::zeros(n, npts);
    let mut beta = GridField::zeros(m, npts);
    let mut z = DVector::zeros(p + q);
    let last = npts - 1;
    let push = |t: f64, y: &DVector<f64>, z: &DVector<f64>, u: DVector<f64>, hs: [&mut HistoryBuffer; 4]| -> Result<()> {
        let [yh, xih, x1h, uh] = hs;
        yh.push(t, y.clone())?;
        xih.push(t, z.rows(0, p).into_owned())?;
        x1h.push(t, z.rows(p, q).into_owned())?;
        uh.push(t, u)
    };
    push(0.0, &trace(&alpha, last), &z, input(0.0), [&mut yh, &mut xih, &mut x1h, &mut uh])?;
    let mut window = Window {
        start: 1.1 * form.horizon,
        err: 0.0,
        scale: 0.0,
    };
    let steps = (opts.horizon / dt).ceil() as usize;
    for s in 1..=steps {
        let t = s as f64 * dt;
        let y0 = trace(&alpha, last);
        let (a_pred, _) = stepper.interior(&alpha, &beta, &y0, &y0);
        let y_mid = (&y0 + trace(&a_pred, last)) * 0.5;
        let (mut a, mut b) = stepper.interior(&alpha, &beta, &y_mid, &y_mid);
        let y1 = trace(&a, last);
        z = rk4_linear(&a_o, &z, &(&g_z * &y0), &(&g_z * &y1), dt);
        let u = input(t);
        stepper.boundaries(&mut a, &mut b, &z, &u);
        alpha = a;
        beta = b;
        push(t, &y1, &z, u, [&mut yh, &mut xih, &mut x1h, &mut uh])?;
        if t >= window.start && s % opts.stride.max(1) == 0 {
            let pred = form.f_alpha.apply(&yh, t)?
                + form.f_xi.apply(&xih, t)?
                + form.f_x.apply(&x1h, t)?
                + form.f_u.apply(&uh, t)?;
            window.record(t, &pred, &y1);
        }
        if !alpha.is_finite() {
            return Err(Error::Consistency("residual simulation diverged".into()));
        }
    }
    window.relative()
}

/// Same oracle for the controller target system: `ᾱ(t,0)` against
/// `P_α[ᾱ(·,0)] + C₀ξ + ΓX₁ + U`.
pub fn residual_check_control(
    form: &ControlDelayForm,
    model: &PlantModel,
    c: &CouplingFunctions,
    k: &KernelSetControl,
    opts: ResidualOptions,
) -> Result<f64> {
    let (n, m, p, q) = (model.n, model.m, model.p, model.q);
    let npts = k.grid.n();
    let dt = k.grid.h() / model.max_speed();
    let stepper = TargetStepper::new(model, npts, dt, &k.g5, &c.g2, &k.f_alpha_bar, &c.f_beta, &c.gamma0)?;
    let (a_c, g_z) = build_observer_odes(model, c);
    let input = smooth_input(n, opts.seed);
    let mut wh = HistoryBuffer::new(n, dt, form.horizon + 2.0 * dt, 0.0, true);

    let mut alpha = GridField::zeros(n, npts);
    let mut beta = GridField::zeros(m, npts);
    let mut z = DVector::<f64>::zeros(p + q);
    let last = npts - 1;
    wh.push(0.0, trace(&alpha, 0))?;
    let mut window = Window {
        start: 1.1 * form.horizon,
        err: 0.0,
        scale: 0.0,
    };
    let steps = (opts.horizon / dt).ceil() as usize;
    for s in 1..=steps {
        let t = s as f64 * dt;
        let u = input(t);
        let (w0, y0) = (trace(&alpha, 0), trace(&alpha, last));
        let advance = |w_mid: &DVector<f64>, y_mid: &DVector<f64>| {
            let (mut a, mut b) = stepper.interior(&alpha, &beta, w_mid, y_mid);
            let y1 = trace(&a, last);
            let z1 = rk4_linear(&a_c, &z, &(&g_z * &y0), &(&g_z * &y1), dt);
            stepper.boundaries(&mut a, &mut b, &z1, &u);
            (a, b, z1)
        };
        let (a_pred, _, _) = advance(&w0, &y0);
        let w_mid = (&w0 + trace(&a_pred, 0)) * 0.5;
        let y_mid = (&y0 + trace(&a_pred, last)) * 0.5;
        let (a, b, z1) = advance(&w_mid, &y_mid);
        alpha = a;
        beta = b;
        z = z1;
        let w = trace(&alpha, 0);
        wh.push(t, w.clone())?;
        if t >= window.start && s % opts.stride.max(1) == 0 {
            let pred = form.p_alpha.apply(&wh, t)?
                + &model.c0 * z.rows(0, p)
                + &c.gamma0 * z.rows(p, q)
                + &u;
            window.record(t, &pred, &w);
        }
        if !alpha.is_finite() {
            return Err(Error::Consistency("residual simulation diverged".into()));
        }
    }
    window.relative()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delayform::{derive_control_delay_form, derive_observer_delay_form};
    use crate::kernels::{solve_control_kernels, solve_coupling_terms, solve_observer_kernels, TriGrid};
    use crate::model::fixtures::{demo_model, scalar_model};

    fn residuals(model: &PlantModel, npts: usize) -> (f64, f64) {
        let grid = TriGrid::new(npts).unwrap();
        let k = solve_observer_kernels(model, grid).unwrap();
        let c = solve_coupling_terms(model, &k).unwrap();
        let kc = solve_control_kernels(model, &c, grid).unwrap();
        let fo = derive_observer_delay_form(model, &c).unwrap();
        let fc = derive_control_delay_form(model, &c, &kc).unwrap();
        let ro = residual_check_observer(&fo, model, &c, ResidualOptions::for_horizon(fo.horizon, 3)).unwrap();
        let rc = residual_check_control(&fc, model, &c, &kc, ResidualOptions::for_horizon(fc.horizon, 3)).unwrap();
        (ro, rc)
    }

    #[test]
    fn zero_coupling_is_exact_transport() {
        // Equal speeds make every trace land on a node.
        let mut md = scalar_model(0.0, 0.0);
        md.lambda = md.mu.clone();
        md.c1.fill(0.0);
        md.c0.fill(0.0);
        md.e0.fill(0.0);
        let (ro, rc) = residuals(&md, 41);
        assert!(ro <= 1e-10 && rc <= 1e-10, "{ro:e} {rc:e}");
    }

    #[test]
    fn coupled_scalar_and_demo() {
        for md in [scalar_model(0.4, -0.3), demo_model()] {
            let (ro, rc) = residuals(&md, 101);
            assert!(ro <= 1e-2 && rc <= 1e-2, "{ro:e} {rc:e}");
        }
    }
}
