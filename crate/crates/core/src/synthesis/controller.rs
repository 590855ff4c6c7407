use nalgebra::DVector;
use num_complex::Complex64;

use crate::delayform::{ControlDelayForm, DelayOperator};
use crate::error::{Error, Result};
use crate::kernels::CouplingFunctions;
use crate::model::PlantModel;
use crate::numerics::{eigenvalues, spectral_abscissa, stabilizing_gain, Matrix};
use crate::sim::HistoryBuffer;
use crate::synthesis::artstein::{exp_tail, Side};
use crate::synthesis::build_observer_odes;
use crate::synthesis::filter::{FilterState, LowPassFilter};

/// Predictor design for the controller target system.
///
/// Choosing `U = Ū − P_α[w] − C₀ξ − ΓX₁` makes `w = ᾱ(·,0) = Ū`, after which
/// `Ż = A_cZ + P_Z[Ū]`. With `Z_c = Z + ∫₀^τ K_z(σ)Ū(t−σ) dσ` this reduces to `Ż_c = A_cZ_c + B̄Ū`,
/// and `Ū = K_cZ_c` closes the loop.
#[derive(Debug, Clone)]
pub struct ControllerSynthesis {
    pub a_c: Matrix,
    pub b_bar: Matrix,
    /// `ξ` and `X₁` blocks of `∫ e^{−A_cθ} Q(θ) dθ`, the distributed share of `B̄`.
    pub e0_bar: Matrix,
    pub e1_bar: Matrix,
    /// `K_z`, `(p+q)×n`, acting on the history of `w`.
    pub predictor: DelayOperator,
    /// `n×(p+q)`.
    pub k_c: Matrix,
    pub p_alpha: DelayOperator,
    pub c0: Matrix,
    pub gamma0: Matrix,
    pub margin: f64,
    /// Spectral abscissa of `A_c + B̄K_c`.
    pub abscissa: f64,
}

/// `[a; b]` for operators on the same signal.
fn vstack(parts: &[&DelayOperator]) -> Result<DelayOperator> {
    let first = parts[0];
    let cols = first.shape().1;
    let rows: usize = parts.iter().map(|o| o.shape().0).sum();
    let mut out = DelayOperator::zeros(rows, cols, first.horizon(), first.points());
    let mut r0 = 0;
    for o in parts {
        let nr = o.shape().0;
        let mut e = Matrix::zeros(rows, nr);
        e.view_mut((r0, 0), (nr, nr)).fill_with_identity();
        out.add_assign(&o.premul(&e))?;
        r0 += nr;
    }
    Ok(out)
}

/// `(K_z, B̄, Ē₀, Ē₁)` for the delayed ODE input `P_Z = [P_ξ; P_X]`.
pub fn build_xc_transforms(
    form: &ControlDelayForm,
    a_c: &Matrix,
    p: usize,
) -> Result<(DelayOperator, Matrix, Matrix, Matrix)> {
    let p_z = vstack(&[&form.p_xi, &form.p_x])?;
    let (predictor, b_bar) = exp_tail(&p_z, a_c, Side::Left)?;
    let distributed = DelayOperator::from_masses(p_z.horizon(), p_z.masses().to_vec());
    let (_, e_bar) = exp_tail(&distributed, a_c, Side::Left)?;
    let q = e_bar.nrows() - p;
    Ok((
        predictor,
        b_bar,
        e_bar.rows(0, p).into_owned(),
        e_bar.rows(p, q).into_owned(),
    ))
}

/// Verifies that `(A_c, B̄)` is stabilizable and returns `K_c` with `A_c + B̄K_c` Hurwitz with
/// the given margin.
pub fn check_assumption3_and_design_kc(a_c: &Matrix, b_bar: &Matrix, margin: f64) -> Result<Matrix> {
    let k = stabilizing_gain(a_c, b_bar, margin)?;
    let closed = a_c + b_bar * &k;
    if spectral_abscissa(&closed)? > -margin + 1e-8 {
        let bad: Vec<Complex64> = eigenvalues(&closed)?
            .into_iter()
            .filter(|z| z.re > -margin + 1e-8)
            .collect();
        return Err(Error::Unstabilizable { eigenvalues: bad });
    }
    Ok(k)
}

pub fn design_controller(
    model: &PlantModel,
    c: &CouplingFunctions,
    form: &ControlDelayForm,
    margin: f64,
) -> Result<ControllerSynthesis> {
    let (a_c, _) = build_observer_odes(model, c);
    let (predictor, b_bar, e0_bar, e1_bar) = build_xc_transforms(form, &a_c, model.p)?;
    let k_c = check_assumption3_and_design_kc(&a_c, &b_bar, margin)?;
    let abscissa = spectral_abscissa(&(&a_c + &b_bar * &k_c))?;
    Ok(ControllerSynthesis {
        a_c,
        b_bar,
        e0_bar,
        e1_bar,
        predictor,
        k_c,
        p_alpha: form.p_alpha.clone(),
        c0: model.c0.clone(),
        gamma0: c.gamma0.clone(),
        margin,
        abscissa,
    })
}

/// Running evaluation of the control law, optionally through a low-pass filter.
///
/// It keeps the history of `w = ᾱ(·,0)` reconstructed from the applied input, so the predictor
/// stays exact when the filter makes the applied `U` differ from the raw law.
#[derive(Debug, Clone)]
pub struct ControlLaw {
    ctrl: ControllerSynthesis,
    w: HistoryBuffer,
    /// `(I − K_c K_z,0)⁻¹ K_c`.
    gain: Matrix,
    /// `I − P_α,0`.
    direct: Matrix,
    direct_inv: Matrix,
    filter: Option<FilterState>,
}

impl ControlLaw {
    pub fn new(ctrl: &ControllerSynthesis, filter: Option<&LowPassFilter>, dt: f64, t0: f64) -> Result<Self> {
        let n = ctrl.k_c.nrows();
        let span = ctrl.predictor.horizon().max(ctrl.p_alpha.horizon()) + 4.0 * dt;
        let kz0 = ctrl.predictor.weight_on_latest(dt);
        let gain = (Matrix::identity(n, n) - &ctrl.k_c * kz0)
            .try_inverse()
            .ok_or_else(|| Error::Consistency("predictor weight on the current input is singular".into()))?
            * &ctrl.k_c;
        let direct = Matrix::identity(n, n) - ctrl.p_alpha.weight_on_latest(dt);
        let direct_inv = direct
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Consistency("x = 0 weight on the current input is singular".into()))?;
        Ok(Self {
            ctrl: ctrl.clone(),
            w: HistoryBuffer::new(n, dt, span, t0, true),
            gain,
            direct,
            direct_inv,
            filter: filter.map(|f| f.discretize(n, dt)).transpose()?,
        })
    }

    /// `Z_c(t)` given `Z(t)`, once `w(t)` is recorded.
    pub fn artstein_state(&self, z: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        Ok(z + self.ctrl.predictor.apply(&self.w, t)?)
    }

    /// The input to apply at `t` for ODE states `(ξ, X₁)`. Times must advance by the history step.
    pub fn evaluate(&mut self, t: f64, xi: &DVector<f64>, x1: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.direct.nrows();
        self.w.push(t, DVector::zeros(n))?;
        let mut z = DVector::zeros(xi.len() + x1.len());
        z.rows_mut(0, xi.len()).copy_from(xi);
        z.rows_mut(xi.len(), x1.len()).copy_from(x1);
        let past_z = self.ctrl.predictor.apply(&self.w, t)?;
        let past_a = self.ctrl.p_alpha.apply(&self.w, t)?;
        let ubar = &self.gain * (z + past_z);
        let known = past_a + &self.ctrl.c0 * xi + &self.ctrl.gamma0 * x1;
        let raw = &self.direct * &ubar - &known;
        let applied = match &mut self.filter {
            Some(f) => f.step(&raw),
            None => raw,
        };
        let w = &self.direct_inv * (known + &applied);
        self.w.overwrite_latest(w)?;
        Ok(applied)
    }
}
