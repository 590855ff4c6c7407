use nalgebra::DVector;

use crate::delayform::{placed, quad, stack, DelayOperator, KERNEL_OVERSAMPLING};
use crate::error::{Error, Result};
use crate::kernels::CouplingFunctions;
use crate::model::PlantModel;
use crate::numerics::Matrix;
use crate::sim::HistoryBuffer;

/// `y(t) = α(t,1) = F_α[y] + F_ξ[ξ] + F_X[X₁] + F_U[U]` along solutions of the observer target
/// system, every operator acting on the past of its signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDelayForm {
    pub horizon: f64,
    /// `n×n`, acting on `y`.
    pub f_alpha: DelayOperator,
    /// `n×p`, acting on `ξ`.
    pub f_xi: DelayOperator,
    /// `n×q`, acting on `X₁`.
    pub f_x: DelayOperator,
    /// `n×n`, acting on `U`.
    pub f_u: DelayOperator,
}

/// Longest delay of the form: `α_i(t,0)` reaches back through the in-domain `α_k`, `k < i`, and
/// one reflection.
pub fn observer_horizon(model: &PlantModel) -> f64 {
    let mut reach: Vec<f64> = Vec::with_capacity(model.n);
    for _ in 0..model.n {
        let via_alpha = reach
            .iter()
            .zip(&model.lambda)
            .map(|(d, l)| d + 1.0 / l)
            .fold(0.0_f64, f64::max);
        reach.push((1.0 / model.mu[0]).max(via_alpha));
    }
    reach
        .iter()
        .zip(&model.lambda)
        .map(|(d, l)| d + 1.0 / l)
        .fold(0.0_f64, f64::max)
}

pub fn derive_observer_delay_form(model: &PlantModel, c: &CouplingFunctions) -> Result<ObserverDelayForm> {
    let (n, m, p, q) = (model.n, model.m, model.p, model.q);
    let npts = c.g1.len();
    let h = 1.0 / (npts - 1) as f64;
    let horizon = observer_horizon(model);
    let points = KERNEL_OVERSAMPLING * npts;
    // Signal layout: y | ξ | X₁ | U.
    let ns = 2 * n + p + q;
    let (c_xi, c_x, c_u) = (n, n + p, n + p + q);
    let zero = DelayOperator::zeros(1, ns, horizon, points);
    let in_y = |row: Matrix| placed(1, ns, 0, 0, &row);

    let mut beta0 = Vec::with_capacity(m);
    for j in 0..m {
        let mu = model.mu[j];
        let mut f = zero.clone();
        f.add_tap(1.0 / mu, &in_y(model.r.rows(j, 1).into_owned()))?;
        f.add_kernel_fn(1.0 / mu, |th| in_y(c.g2.eval(mu * th).rows(j, 1).into_owned()));
        beta0.push(f);
    }

    let mut e0: Vec<DelayOperator> = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = zero.clone();
        for (j, b) in beta0.iter().enumerate() {
            f.add_assign(&b.premul(&Matrix::from_element(1, 1, model.q_mat[(i, j)])))?;
        }
        let mut now = Matrix::zeros(1, ns);
        now.view_mut((0, c_xi), (1, p)).copy_from(&model.c0.rows(i, 1));
        now.view_mut((0, c_x), (1, q)).copy_from(&c.gamma0.rows(i, 1));
        now[(0, c_u + i)] = 1.0;
        f.add_tap(0.0, &now)?;
        for (k, ek) in e0.iter().enumerate() {
            let lam = model.lambda[k];
            let fa = |nu: f64| c.f_alpha.eval_entry(nu, i, k);
            if c.f_alpha.values().iter().all(|v| v[(i, k)] == 0.0) {
                continue;
            }
            // ∫₀¹ Fα_ik(ν) α_k(t,ν) dν with α_k(t,ν) = α_k(t−ν/λ_k, 0) + ∫ G₁ y.
            f.add_assign(&ek.convolved(1.0 / lam, |s| Matrix::from_element(1, 1, lam * fa(lam * s)))?)?;
            f.add_kernel_fn(1.0 / lam, |th| {
                in_y(quad(lam * th, 1.0, h, |nu| c.g1.eval(nu - lam * th).rows(k, 1) * fa(nu)))
            });
        }
        for j in 0..m {
            let mu = model.mu[j];
            let fb = |nu: f64| c.f_beta.eval_entry(nu, i, j);
            f.add_kernel_fn(1.0 / mu, |th| {
                let reflected = model.r.rows(j, 1) * (mu * fb(1.0 - mu * th));
                let sourced = quad(0.0, 1.0 - mu * th, h, |nu| c.g2.eval(nu + mu * th).rows(j, 1) * fb(nu));
                in_y(reflected + sourced)
            });
        }
        e0.push(f);
    }

    let mut rows = Vec::with_capacity(n);
    for (i, ei) in e0.iter().enumerate() {
        let lam = model.lambda[i];
        let mut y = ei.shifted(1.0 / lam)?;
        y.add_kernel_fn(1.0 / lam, |th| in_y(c.g1.eval(1.0 - lam * th).rows(i, 1).into_owned()));
        if y.taps().iter().any(|(d, _)| *d <= 0.0) {
            return Err(Error::Consistency("observer delay form has an undelayed term".into()));
        }
        rows.push(y);
    }
    let all = stack(&rows)?;
    Ok(ObserverDelayForm {
        horizon,
        f_alpha: all.columns(0, n),
        f_xi: all.columns(c_xi, p),
        f_x: all.columns(c_x, q),
        f_u: all.columns(c_u, n),
    })
}

/// `y₁(t) = y(t) − F_α[y](t) − F_U[U](t)`, the part of the measurement carried by `(ξ, X₁)`.
pub fn compute_y1(form: &ObserverDelayForm, y: &HistoryBuffer, u: &HistoryBuffer, t: f64) -> Result<DVector<f64>> {
    for hist in [y, u] {
        if hist.earliest_time() > t - form.horizon + 1e-9 {
            return Err(Error::Precondition(format!(
                "history starts at {} but y₁({t}) needs it from {}",
                hist.earliest_time(),
                t - form.horizon
            )));
        }
    }
    Ok(y.at(t)? - form.f_alpha.apply(y, t)? - form.f_u.apply(u, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{solve_coupling_terms, solve_observer_kernels, TriGrid};
    use crate::model::fixtures::{demo_model, scalar_model};

    fn form_for(model: &PlantModel, npts: usize) -> ObserverDelayForm {
        let k = solve_observer_kernels(model, TriGrid::new(npts).unwrap()).unwrap();
        let c = solve_coupling_terms(model, &k).unwrap();
        derive_observer_delay_form(model, &c).unwrap()
    }

    fn bare_scalar() -> PlantModel {
        let mut md = scalar_model(0.0, 0.0);
        md.c1.fill(0.0);
        md.c0.fill(0.0);
        md
    }

    #[test]
    fn scalar_single_reflection() {
        let md = bare_scalar();
        let f = form_for(&md, 41);
        let (lam, mu) = (md.lambda[0], md.mu[0]);
        assert_eq!(f.horizon, 1.0 / lam + 1.0 / mu);
        assert_eq!(f.f_alpha.taps().len(), 1);
        let (d, tap) = &f.f_alpha.taps()[0];
        assert!((d - (1.0 / lam + 1.0 / mu)).abs() < 1e-12);
        assert_eq!(tap[(0, 0)], md.q_mat[(0, 0)] * md.r[(0, 0)]);
        assert!(f.f_alpha.kernel().sup_norm() < 1e-15);
        assert_eq!(f.f_u.taps(), &[(1.0 / lam, Matrix::from_element(1, 1, 1.0))]);
        assert!(f.f_xi.is_zero() && f.f_x.is_zero());
    }

    #[test]
    fn no_reflection_without_q() {
        let mut md = bare_scalar();
        md.q_mat.fill(0.0);
        assert!(form_for(&md, 21).f_alpha.is_zero());
    }

    #[test]
    fn demo_taps_are_round_trips() {
        let md = demo_model();
        let f = form_for(&md, 41);
        for (d, _) in f.f_alpha.taps() {
            let ok = md.lambda.iter().any(|l| md.mu.iter().any(|mu| (d - 1.0 / l - 1.0 / mu).abs() < 1e-12));
            assert!(ok && *d > 0.0 && *d <= f.horizon, "{d}");
        }
        assert!(f.horizon > md.tau());
    }

    #[test]
    fn y1_examples() {
        let md = bare_scalar();
        let f = form_for(&md, 21);
        let dt = 0.01;
        let mut y = HistoryBuffer::new(1, dt, 5.0, 0.0, false);
        let mut u = HistoryBuffer::new(1, dt, 5.0, 0.0, false);
        for k in 0..=300 {
            y.push(k as f64 * dt, DVector::from_element(1, 1.0)).unwrap();
            u.push(k as f64 * dt, DVector::zeros(1)).unwrap();
        }
        let qr = md.q_mat[(0, 0)] * md.r[(0, 0)];
        assert!((compute_y1(&f, &y, &u, 3.0).unwrap()[0] - (1.0 - qr)).abs() < 1e-12);
        assert!(matches!(compute_y1(&f, &y, &u, 1.0), Err(Error::Precondition(_))));
    }
}
