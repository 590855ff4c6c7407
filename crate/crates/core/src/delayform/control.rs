use crate::delayform::{quad, stack, DelayOperator, KERNEL_OVERSAMPLING};
use crate::error::Result;
use crate::kernels::{CouplingFunctions, KernelSetControl};
use crate::model::PlantModel;
use crate::numerics::Matrix;

/// Along solutions of the controller target system, with `w(t) = ᾱ(t,0)`:
/// `w(t) = P_α[w](t) + C₀ξ(t) + ΓX₁(t) + U(t)`, `ξ̇ = A₀ξ + G₄X₁ + P_ξ[w]`, `Ẋ₁ = A₁X₁ + P_X[w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDelayForm {
    pub horizon: f64,
    /// `n×n`; its kernel includes `θ = 0`, where `w(t)` itself enters.
    pub p_alpha: DelayOperator,
    /// `p×n`.
    pub p_xi: DelayOperator,
    /// `q×n`.
    pub p_x: DelayOperator,
}

pub fn derive_control_delay_form(
    model: &PlantModel,
    c: &CouplingFunctions,
    k: &KernelSetControl,
) -> Result<ControlDelayForm> {
    let (n, m) = (model.n, model.m);
    let npts = k.grid.n();
    let h = k.grid.h();
    let horizon = model.tau();
    let points = KERNEL_OVERSAMPLING * npts;

    // ᾱ(t,1) as an operator on w.
    let mut a1 = DelayOperator::zeros(n, n, horizon, points);
    for i in 0..n {
        let lam = model.lambda[i];
        let mut e = Matrix::zeros(n, n);
        e[(i, i)] = 1.0;
        a1.add_tap(1.0 / lam, &e)?;
        a1.add_kernel_fn(1.0 / lam, |th| {
            let mut r = Matrix::zeros(n, n);
            r.row_mut(i).copy_from(&k.g5.eval(1.0 - lam * th).row(i));
            r
        });
    }

    let mut beta0 = Vec::with_capacity(m);
    for j in 0..m {
        let mu = model.mu[j];
        let mut b = a1.premul(&model.r.rows(j, 1).into_owned()).shifted(1.0 / mu)?;
        b.add_assign(&a1.convolved(1.0 / mu, |s| c.g2.eval(mu * s).rows(j, 1).into_owned())?)?;
        beta0.push(b);
    }
    let mut p_alpha = stack(&beta0)?.premul(&model.q_mat);

    for j in 0..n {
        let lam = model.lambda[j];
        let fab = |nu: f64| k.f_alpha_bar.eval(nu).columns(j, 1).into_owned();
        p_alpha.add_kernel_fn(1.0 / lam, |th| {
            let mut r = Matrix::zeros(n, n);
            r.column_mut(j).copy_from(&(fab(lam * th) * lam));
            r + quad(lam * th, 1.0, h, |nu| fab(nu) * k.g5.eval(nu - lam * th).rows(j, 1))
        });
    }
    for j in 0..m {
        let mu = model.mu[j];
        let fb = |nu: f64| c.f_beta.eval(nu).columns(j, 1).into_owned();
        let r_j = model.r.rows(j, 1).into_owned();
        p_alpha.add_assign(&a1.convolved(1.0 / mu, |s| fb(1.0 - mu * s) * &r_j * mu)?)?;
        p_alpha.add_assign(&a1.convolved(1.0 / mu, |s| {
            quad(0.0, 1.0 - mu * s, h, |nu| fb(nu) * c.g2.eval(nu + mu * s).rows(j, 1))
        })?)?;
    }

    Ok(ControlDelayForm {
        horizon,
        p_alpha,
        p_xi: a1.premul(&c.g3),
        p_x: a1.premul(&model.e1),
    })
}
