use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expm, Matrix};
use crate::sim::{run_closed_loop, Mode, SimConfig};
use crate::synthesis::FullSynthesis;

/// Required `χ(T)/χ(0)` for a closed loop to count as decaying.
pub const DECAY_FACTOR: f64 = 1e-2;

/// Butterworth low-pass `ω_c^r / D(s)` of order `r`, unity DC gain, applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowPassFilter {
    pub order: usize,
    pub omega_c: f64,
}

impl LowPassFilter {
    pub fn new(order: usize, omega_c: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Invalid("filter order must be at least 1".into()));
        }
        if !(omega_c.is_finite() && omega_c > 0.0) {
            return Err(Error::Invalid(format!("filter cutoff must be finite and positive, got {omega_c}")));
        }
        Ok(Self { order, omega_c })
    }

    pub fn butterworth2(omega_c: f64) -> Result<Self> {
        Self::new(2, omega_c)
    }

    /// Monic denominator coefficients `[d₀, …, d_{r−1}]` of `D(s) = s^r + d_{r−1}s^{r−1} + … + d₀`.
    fn denominator(&self) -> Vec<f64> {
        let r = self.order;
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for k in 0..r {
            let angle = std::f64::consts::PI * (2 * k + r + 1) as f64 / (2 * r) as f64;
            let pole = Complex64::from_polar(self.omega_c, angle);
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * pole;
            }
            poly = next;
        }
        poly[..r].iter().map(|c| c.re).collect()
    }

    /// Controllable canonical realization `(A, B, C)` of one channel.
    pub fn state_space(&self) -> (Matrix, Matrix, Matrix) {
        let r = self.order;
        let d = self.denominator();
        let mut a = Matrix::zeros(r, r);
        for i in 0..r - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for (j, dj) in d.iter().enumerate() {
            a[(r - 1, j)] = -dj;
        }
        let mut b = Matrix::zeros(r, 1);
        b[(r - 1, 0)] = 1.0;
        let mut c = Matrix::zeros(1, r);
        c[(0, 0)] = self.omega_c.powi(r as i32);
        (a, b, c)
    }

    /// `|C(iωI − A)⁻¹B|`, evaluated from the realization.
    pub fn magnitude(&self, omega: f64) -> f64 {
        let (a, b, c) = self.state_space();
        let r = self.order;
        let m = DMatrix::<Complex64>::from_fn(r, r, |i, j| {
            let diag = if i == j { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
            diag - a[(i, j)]
        });
        let rhs = DVector::<Complex64>::from_fn(r, |i, _| Complex64::new(b[(i, 0)], 0.0));
        match m.lu().solve(&rhs) {
            Some(x) => (0..r).map(|i| x[i] * c[(0, i)]).sum::<Complex64>().norm(),
            None => f64::INFINITY,
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.magnitude(0.0)
    }

    /// Zero-order-hold discretization for `channels` parallel inputs.
    pub fn discretize(&self, channels: usize, dt: f64) -> Result<FilterState> {
        let (a, b, c) = self.state_space();
        let r = self.order;
        let mut aug = Matrix::zeros(r + 1, r + 1);
        aug.view_mut((0, 0), (r, r)).copy_from(&a);
        aug.view_mut((0, r), (r, 1)).copy_from(&b);
        let e = expm(&aug, dt)?;
        Ok(FilterState {
            ad: e.view((0, 0), (r, r)).into_owned(),
            bd: e.view((0, r), (r, 1)).into_owned(),
            c,
            x: vec![DVector::zeros(r); channels],
        })
    }
}

/// Discretized filter with its per-channel state, started at rest.
#[derive(Debug, Clone)]
pub struct FilterState {
    ad: Matrix,
    bd: Matrix,
    c: Matrix,
    x: Vec<DVector<f64>>,
}

impl FilterState {
    /// Returns the current output, then advances one step holding `input`.
    pub fn step(&mut self, input: &DVector<f64>) -> DVector<f64> {
        let out = DVector::from_iterator(self.x.len(), self.x.iter().map(|x| (&self.c * x)[0]));
        for (x, u) in self.x.iter_mut().zip(input.iter()) {
            *x = &self.ad * &*x + &self.bd * *u;
        }
        out
    }
}

/// One candidate of the cutoff sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega_c: f64,
    /// `χ(T)/χ(0)` of the filtered output-feedback run, `∞` if it diverged.
    pub ratio: f64,
    pub meets: bool,
}

/// Order-2 Butterworth filter with the smallest cutoff in `{2^k ω₀ : k = 0..=max_doublings}`
/// whose output-feedback loop decays by [`DECAY_FACTOR`] over twice `sim.t_end`.
pub fn design_filter(
    syn: &FullSynthesis,
    sim: &SimConfig,
    omega0: f64,
    max_doublings: u32,
) -> Result<(LowPassFilter, Vec<SweepPoint>)> {
    let mut cfg = sim.clone();
    cfg.t_end = 2.0 * sim.t_end;
    let mut sweep = Vec::new();
    for k in 0..=max_doublings {
        let filter = LowPassFilter::butterworth2(omega0 * 2f64.powi(k as i32))?;
        cfg.filter = Some(filter);
        let tr = run_closed_loop(syn, &cfg, Mode::OutputFeedback)?;
        let chi = tr.chi_state();
        let ratio = if tr.diverged { f64::INFINITY } else { chi[chi.len() - 1] / chi[0] };
        let meets = ratio <= DECAY_FACTOR;
        sweep.push(SweepPoint { omega_c: filter.omega_c, ratio, meets });
        if meets {
            return Ok((filter, sweep));
        }
    }
    Err(Error::SweepExhausted(format!(
        "no cutoff in [{omega0}, {}] decays by {DECAY_FACTOR:e}",
        omega0 * 2f64.powi(max_doublings as i32)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_is_butterworth() {
        let f = LowPassFilter::butterworth2(3.0).unwrap();
        let (a, _, _) = f.state_space();
        assert!((a[(1, 0)] + 9.0).abs() < 1e-12);
        assert!((a[(1, 1)] + 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((f.magnitude(3.0) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unity_dc_gain_and_roll_off() {
        for order in 1..=4 {
            let f = LowPassFilter::new(order, 2.0).unwrap();
            assert!((f.dc_gain() - 1.0).abs() < 1e-12);
            let expect = 1.0 / (1.0 + 100f64.powi(2 * order as i32)).sqrt();
            assert!((f.magnitude(200.0) - expect).abs() < 1e-9 * expect.max(1e-12));
        }
        let f = LowPassFilter::butterworth2(2.0).unwrap();
        assert!(f.magnitude(200.0) <= 1e-3 * f.dc_gain());
    }

    #[test]
    fn step_response_settles() {
        let f = LowPassFilter::butterworth2(5.0).unwrap();
        let mut s = f.discretize(1, 0.01).unwrap();
        let one = DVector::from_element(1, 1.0);
        let first = s.step(&one)[0];
        assert_eq!(first, 0.0);
        let mut last = 0.0;
        for _ in 0..1000 {
            last = s.step(&one)[0];
        }
        assert!((last - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cutoff_must_be_finite() {
        assert!(LowPassFilter::butterworth2(f64::INFINITY).is_err());
        assert!(LowPassFilter::butterworth2(0.0).is_err());
    }
}
