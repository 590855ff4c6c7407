use num_complex::Complex64;

use crate::delayform::{DelayOperator, ObserverDelayForm};
use crate::error::{Error, Result};
use crate::kernels::CouplingFunctions;
use crate::model::PlantModel;
use crate::numerics::{eigenvalues, spectral_abscissa, stabilizing_gain, Matrix};
use crate::synthesis::artstein::{exp_tail, Side};
use crate::synthesis::build_observer_odes;

/// Observer design on `Z = (ξ, X₁)`.
///
/// Along solutions, `y₁ = F_Z[Z] = C_eff Z(t) − D[y](t)`, since every delayed `Z(t−θ)` is
/// `e^{−A_oθ}Z(t)` minus a Duhamel integral of `y`. The observer
/// `Ẑ' = A_oẐ + G_Z y + L_o(C_eff Ẑ − D[y] − y₁)` then has error dynamics `A_o + L_oC_eff`.
#[derive(Debug, Clone)]
pub struct ObserverSynthesis {
    pub a_o: Matrix,
    pub g_z: Matrix,
    /// `F_Z = [F_ξ F_X]`, `n×(p+q)`.
    pub f_z: DelayOperator,
    /// `n×(p+q)`.
    pub c_eff: Matrix,
    /// `n×n` operator on `y` giving the Duhamel correction `D`.
    pub duhamel: DelayOperator,
    /// `(p+q)×n`.
    pub l_o: Matrix,
    /// Output injection at `x = 0`, acting on the innovation `ỹ = α̂(t,1) − y(t)`.
    pub o0: DelayOperator,
    pub margin: f64,
    /// Spectral abscissa of `A_o + L_oC_eff`.
    pub abscissa: f64,
}

/// Verifies that `(C_eff, A_o)` is detectable and returns `L_o` with
/// `A_o + L_oC_eff` Hurwitz with the given margin.
pub fn check_assumption2_and_design_lo(a_o: &Matrix, c_eff: &Matrix, margin: f64) -> Result<Matrix> {
    let l = stabilizing_gain(&a_o.transpose(), &c_eff.transpose(), margin)?.transpose();
    let closed = a_o + &l * c_eff;
    let abscissa = spectral_abscissa(&closed)?;
    if abscissa > -margin + 1e-8 {
        let bad: Vec<Complex64> = eigenvalues(&closed)?
            .into_iter()
            .filter(|z| z.re > -margin + 1e-8)
            .collect();
        return Err(Error::Unstabilizable { eigenvalues: bad });
    }
    Ok(l)
}

/// `O₀[ỹ] = −Σ_j Q_{·j}R_j ỹ(t − 1/μ_j) − Σ_j ∫₀^{1/μ_j} μ_j F_β,·j(1 − μ_jθ) R_j ỹ(t−θ) dθ`: it cancels
/// the reflected innovation in the `x = 0` boundary of the observer error.
pub fn build_o0(model: &PlantModel, c: &CouplingFunctions, horizon: f64, points: usize) -> Result<DelayOperator> {
    let n = model.n;
    let mut o0 = DelayOperator::zeros(n, n, horizon, points);
    for j in 0..model.m {
        let mu = model.mu[j];
        let r_j = model.r.rows(j, 1).into_owned();
        let q_j = model.q_mat.columns(j, 1).into_owned();
        o0.add_tap(1.0 / mu, &(-(&q_j * &r_j)))?;
        o0.add_kernel_fn(1.0 / mu, |th| {
            -(c.f_beta.eval(1.0 - mu * th).columns(j, 1) * &r_j) * mu
        });
    }
    Ok(o0)
}

pub fn design_observer(
    model: &PlantModel,
    c: &CouplingFunctions,
    form: &ObserverDelayForm,
    margin: f64,
) -> Result<ObserverSynthesis> {
    let (a_o, g_z) = build_observer_odes(model, c);
    let f_z = DelayOperator::hstack(&[&form.f_xi, &form.f_x])?;
    let (w, c_eff) = exp_tail(&f_z, &a_o, Side::Right)?;
    let duhamel = w.postmul(&g_z);
    let l_o = check_assumption2_and_design_lo(&a_o, &c_eff, margin)?;
    let abscissa = spectral_abscissa(&(&a_o + &l_o * &c_eff))?;
    let o0 = build_o0(model, c, form.horizon, form.f_alpha.points())?;
    Ok(ObserverSynthesis {
        a_o,
        g_z,
        f_z,
        c_eff,
        duhamel,
        l_o,
        o0,
        margin,
        abscissa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delayform::derive_observer_delay_form;
    use crate::kernels::{solve_coupling_terms, solve_observer_kernels, TriGrid};
    use crate::model::fixtures::{demo_model, scalar_model};
    use crate::sim::HistoryBuffer;
    use nalgebra::DVector;

    #[test]
    fn full_observation_is_detectable() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let l = check_assumption2_and_design_lo(&a, &Matrix::identity(2, 2), 0.1).unwrap();
        assert!(spectral_abscissa(&(&a + l)).unwrap() <= -0.1 + 1e-8);
    }

    #[test]
    fn nothing_measured_is_undetectable() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match check_assumption2_and_design_lo(&a, &Matrix::zeros(1, 2), 0.1) {
            Err(Error::Unstabilizable { eigenvalues }) => {
                assert_eq!(eigenvalues.len(), 1);
                assert!((eigenvalues[0].re - 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scalar_o0_is_one_reflection() {
        let mut md = scalar_model(0.0, 0.0);
        md.c1.fill(0.0);
        md.c0.fill(0.0);
        let k = solve_observer_kernels(&md, TriGrid::new(21).unwrap()).unwrap();
        let c = solve_coupling_terms(&md, &k).unwrap();
        let o0 = build_o0(&md, &c, 2.0, 81).unwrap();
        assert_eq!(o0.taps().len(), 1);
        let (d, m) = &o0.taps()[0];
        assert!((d - 1.0 / md.mu[0]).abs() < 1e-15);
        assert_eq!(m[(0, 0)], -md.q_mat[(0, 0)] * md.r[(0, 0)]);
        assert!(o0.masses().iter().all(|m| m.amax() == 0.0));
        let mut zero = HistoryBuffer::new(1, 0.01, 3.0, 0.0, true);
        for s in 0..=100 {
            zero.push(s as f64 * 0.01, DVector::zeros(1)).unwrap();
        }
        assert_eq!(o0.apply(&zero, 1.0).unwrap(), DVector::zeros(1));
    }

    #[test]
    fn demo_observer_meets_margin() {
        let md = demo_model();
        let k = solve_observer_kernels(&md, TriGrid::new(41).unwrap()).unwrap();
        let c = solve_coupling_terms(&md, &k).unwrap();
        let form = derive_observer_delay_form(&md, &c).unwrap();
        let obs = design_observer(&md, &c, &form, 0.1).unwrap();
        let closed = &obs.a_o + &obs.l_o * &obs.c_eff;
        let re_max = eigenvalues(&closed).unwrap().iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert!(re_max <= -0.1 + 1e-8, "{re_max}");
    }
}
