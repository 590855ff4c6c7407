use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{trapezoid_weights, uniform_grid};

/// A vector-valued function on a uniform grid of `[0,1]`, stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    comps: usize,
    n_grid: usize,
    data: Vec<f64>,
}

impl GridField {
    pub fn zeros(comps: usize, n_grid: usize) -> Self {
        Self {
            comps,
            n_grid,
            data: vec![0.0; comps * n_grid],
        }
    }

    pub fn from_fn(comps: usize, n_grid: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let grid = uniform_grid(n_grid, 0.0, 1.0);
        let mut out = Self::zeros(comps, n_grid);
        for c in 0..comps {
            for (k, &x) in grid.iter().enumerate() {
                out.data[c * n_grid + k] = f(c, x);
            }
        }
        out
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n_grid - 1) as f64
    }

    #[inline]
    pub fn comp(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_grid..(c + 1) * self.n_grid]
    }

    #[inline]
    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n_grid..(c + 1) * self.n_grid]
    }

    #[inline]
    pub fn get(&self, c: usize, k: usize) -> f64 {
        self.data[c * self.n_grid + k]
    }

    #[inline]
    pub fn set(&mut self, c: usize, k: usize, v: f64) {
        self.data[c * self.n_grid + k] = v;
    }

    /// Vector of all components at node `k`.
    pub fn node(&self, k: usize) -> DVector<f64> {
        DVector::from_iterator(self.comps, (0..self.comps).map(|c| self.get(c, k)))
    }

    pub fn set_node(&mut self, k: usize, v: &DVector<f64>) {
        for c in 0..self.comps {
            self.set(c, k, v[c]);
        }
    }

    /// Linear interpolation of component `c` at `x ∈ [0,1]`.
    #[inline]
    pub fn interp(&self, c: usize, x: f64) -> f64 {
        interp_uniform(self.comp(c), x)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Squared `L²(0,1)` norm summed over components (trapezoid).
    pub fn l2_squared(&self) -> f64 {
        let w = trapezoid_weights(&uniform_grid(self.n_grid, 0.0, 1.0));
        (0..self.comps)
            .map(|c| self.comp(c).iter().zip(&w).map(|(v, wk)| wk * v * v).sum::<f64>())
            .sum()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Linear interpolation of uniformly spaced samples on `[0,1]`, clamped at the ends.
#[inline]
pub fn interp_uniform(samples: &[f64], x: f64) -> f64 {
    let n = samples.len();
    let s = x * (n - 1) as f64;
    if s <= 0.0 {
        return samples[0];
    }
    if s >= (n - 1) as f64 {
        return samples[n - 1];
    }
    let k = s.floor() as usize;
    let t = s - k as f64;
    samples[k] * (1.0 - t) + samples[k + 1] * t
}

/// Element of the state space: both ODE states and both PDE profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x0: DVector<f64>,
    pub u: GridField,
    pub v: GridField,
    pub x1: DVector<f64>,
}

impl PlantState {
    pub fn zeros(p: usize, n: usize, m: usize, q: usize, n_grid: usize) -> Self {
        Self {
            x0: DVector::zeros(p),
            u: GridField::zeros(n, n_grid),
            v: GridField::zeros(m, n_grid),
            x1: DVector::zeros(q),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.u.n_grid() != self.v.n_grid() {
            return Err(Error::Dimension("u and v must share one grid".into()));
        }
        let finite = self.x0.iter().chain(self.x1.iter()).all(|v| v.is_finite())
            && self.u.is_finite()
            && self.v.is_finite();
        if !finite {
            return Err(Error::Invalid("state has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.x0 *= a;
        out.x1 *= a;
        out.u.scale(a);
        out.v.scale(a);
        out
    }

    /// `self − other`.
    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.x0 -= &other.x0;
        out.x1 -= &other.x1;
        out.u.axpy(-1.0, &other.u);
        out.v.axpy(-1.0, &other.v);
        out
    }
}

/// `‖(X0, u, v, X1)‖_χ` with `L²` parts by trapezoid quadrature.
pub fn chi_norm(state: &PlantState) -> f64 {
    (state.x0.norm_squared() + state.u.l2_squared() + state.v.l2_squared() + state.x1.norm_squared())
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_state_has_zero_norm() {
        assert_eq!(chi_norm(&PlantState::zeros(1, 1, 1, 1, 11)), 0.0);
    }

    #[test]
    fn pythagorean() {
        let mut s = PlantState::zeros(1, 1, 1, 1, 11);
        s.x0[0] = 3.0;
        s.x1[0] = 4.0;
        assert!((chi_norm(&s) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn unit_constant_profile() {
        let mut s = PlantState::zeros(1, 1, 1, 1, 11);
        s.u = GridField::from_fn(1, 11, |_, _| 1.0);
        assert!((chi_norm(&s) - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn chi_norm_is_homogeneous(a in -5.0f64..5.0, c in -2.0f64..2.0, w in 0.5f64..6.0) {
            let mut s = PlantState::zeros(2, 2, 1, 1, 21);
            s.x0[0] = c; s.x0[1] = 0.3; s.x1[0] = -c;
            s.u = GridField::from_fn(2, 21, |k, x| (w * x + k as f64).sin());
            s.v = GridField::from_fn(1, 21, |_, x| c * x);
            let lhs = chi_norm(&s.scaled(a));
            prop_assert!((lhs - a.abs() * chi_norm(&s)).abs() <= 1e-12 * (1.0 + lhs));
        }
    }
}
