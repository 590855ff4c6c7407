//! Plant description, structural validation and the open-loop reflection criterion.

mod assumption;
mod io;
mod state;

pub use assumption::{check_assumption1, Assumption1Report};
pub use io::{CouplingSpec, ModelDocument, MODEL_SCHEMA};
pub use state::{chi_norm, GridField, PlantState};

use crate::numerics::{Matrix, SampledFunction};

/// The ODE-PDE-ODE plant: `n` rightward and `m` leftward transport equations on `[0,1]`, the
/// actuated ODE `X0` (dimension `p`) at `x = 0` and the load ODE `X1` (dimension `q`) at `x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma_pp: SampledFunction,
    pub sigma_pm: SampledFunction,
    pub sigma_mp: SampledFunction,
    pub sigma_mm: SampledFunction,
    pub a0: Matrix,
    pub e0: Matrix,
    pub c0: Matrix,
    pub a1: Matrix,
    pub e1: Matrix,
    pub c1: Matrix,
    pub r: Matrix,
    pub q_mat: Matrix,
}

impl PlantModel {
    /// Total number of PDE components.
    pub fn width(&self) -> usize {
        self.n + self.m
    }

    /// Signed transport speeds `(λ₁, …, λₙ, −μ₁, …, −μₘ)`.
    pub fn signed_speeds(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .copied()
            .chain(self.mu.iter().map(|m| -m))
            .collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.lambda
            .iter()
            .chain(&self.mu)
            .fold(0.0_f64, |a, b| a.max(*b))
    }

    /// `τ = 1/λ₁ + 1/μ₁`, the longest single reflection round trip.
    pub fn tau(&self) -> f64 {
        1.0 / self.lambda[0] + 1.0 / self.mu[0]
    }

    /// Stacked in-domain coupling `Σ(x)` evaluated at `x`.
    pub fn sigma_at(&self, x: f64) -> Matrix {
        let (n, m) = (self.n, self.m);
        let mut s = Matrix::zeros(n + m, n + m);
        s.view_mut((0, 0), (n, n)).copy_from(&self.sigma_pp.eval(x));
        s.view_mut((0, n), (n, m)).copy_from(&self.sigma_pm.eval(x));
        s.view_mut((n, 0), (m, n)).copy_from(&self.sigma_mp.eval(x));
        s.view_mut((n, n), (m, m)).copy_from(&self.sigma_mm.eval(x));
        s
    }

    /// Stacked coupling sampled on `grid`.
    pub fn sigma_on(&self, grid: &[f64]) -> SampledFunction {
        SampledFunction::from_fn(grid.to_vec(), |x| self.sigma_at(x))
    }

    pub fn lambda_plus(&self) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(self.lambda.clone()))
    }

    pub fn lambda_minus(&self) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(self.mu.clone()))
    }

    /// Every violated structural hypothesis, with a locator. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (n, m, p, q) = (self.n, self.m, self.p, self.q);
        if n == 0 || m == 0 || p == 0 || q == 0 {
            out.push(format!("dimensions must be positive (n={n}, m={m}, p={p}, q={q})"));
        }
        if self.lambda.len() != n {
            out.push(format!("lambda has {} entries, expected n={n}", self.lambda.len()));
        }
        if self.mu.len() != m {
            out.push(format!("mu has {} entries, expected m={m}", self.mu.len()));
        }
        if self.lambda.iter().chain(&self.mu).any(|v| !v.is_finite() || *v <= 0.0) {
            out.push("transport velocities must be positive and finite".into());
        }
        if self.lambda.windows(2).any(|w| w[1] <= w[0]) || self.mu.windows(2).any(|w| w[1] <= w[0]) {
            out.push("velocity ordering violated".into());
        }
        let shapes: [(&str, &Matrix, (usize, usize)); 8] = [
            ("A0", &self.a0, (p, p)),
            ("E0", &self.e0, (p, m)),
            ("C0", &self.c0, (n, p)),
            ("A1", &self.a1, (q, q)),
            ("E1", &self.e1, (q, n)),
            ("C1", &self.c1, (m, q)),
            ("R", &self.r, (m, n)),
            ("Q", &self.q_mat, (n, m)),
        ];
        for (name, mat, want) in shapes {
            if mat.shape() != want {
                out.push(format!(
                    "{name} is {}x{}, expected {}x{}",
                    mat.nrows(),
                    mat.ncols(),
                    want.0,
                    want.1
                ));
            } else if mat.iter().any(|v| !v.is_finite()) {
                out.push(format!("{name} has non-finite entries"));
            }
        }
        let blocks: [(&str, &SampledFunction, (usize, usize)); 4] = [
            ("Sigma_pp", &self.sigma_pp, (n, n)),
            ("Sigma_pm", &self.sigma_pm, (n, m)),
            ("Sigma_mp", &self.sigma_mp, (m, n)),
            ("Sigma_mm", &self.sigma_mm, (m, m)),
        ];
        for (name, f, want) in blocks {
            if f.shape() != want {
                out.push(format!(
                    "{name} is {}x{}, expected {}x{}",
                    f.shape().0,
                    f.shape().1,
                    want.0,
                    want.1
                ));
                continue;
            }
            let (a, b) = f.interval();
            if a != 0.0 || b != 1.0 {
                out.push(format!("{name} must be sampled on [0,1], got [{a},{b}]"));
            }
        }
        for (name, f) in [("Sigma_pp", &self.sigma_pp), ("Sigma_mm", &self.sigma_mm)] {
            let (r, c) = f.shape();
            let bad = f
                .values()
                .iter()
                .any(|v| (0..r.min(c)).any(|i| v[(i, i)] != 0.0));
            if bad {
                out.push(format!("nonzero diagonal in {name}"));
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::numerics::uniform_grid;

    /// `n = m = p = q = 1` model with optional constant couplings.
    pub fn scalar_model(sigma_pm: f64, sigma_mp: f64) -> PlantModel {
        let g = uniform_grid(2, 0.0, 1.0);
        let c = |v: f64| SampledFunction::constant(g.clone(), Matrix::from_element(1, 1, v));
        PlantModel {
            n: 1,
            m: 1,
            p: 1,
            q: 1,
            lambda: vec![1.0],
            mu: vec![1.5],
            sigma_pp: c(0.0),
            sigma_pm: c(sigma_pm),
            sigma_mp: c(sigma_mp),
            sigma_mm: c(0.0),
            a0: Matrix::from_element(1, 1, 0.5),
            e0: Matrix::from_element(1, 1, 1.0),
            c0: Matrix::from_element(1, 1, 1.0),
            a1: Matrix::from_element(1, 1, -1.0),
            e1: Matrix::from_element(1, 1, 0.5),
            c1: Matrix::from_element(1, 1, 0.5),
            r: Matrix::from_element(1, 1, 0.4),
            q_mat: Matrix::from_element(1, 1, 0.3),
        }
    }

    /// `n = 2, m = p = q = 1` model with an unstable `A₀` and every coupling block populated.
    pub fn demo_model() -> PlantModel {
        let g = uniform_grid(2, 0.0, 1.0);
        let c = |r: usize, cc: usize, v: &[f64]| {
            SampledFunction::constant(g.clone(), Matrix::from_row_slice(r, cc, v))
        };
        PlantModel {
            n: 2,
            m: 1,
            p: 1,
            q: 1,
            lambda: vec![2.0, 3.0],
            mu: vec![2.5],
            sigma_pp: c(2, 2, &[0.0, 0.3, 0.2, 0.0]),
            sigma_pm: c(2, 1, &[0.2, -0.1]),
            sigma_mp: c(1, 2, &[0.1, 0.2]),
            sigma_mm: c(1, 1, &[0.0]),
            a0: Matrix::from_element(1, 1, 0.5),
            e0: Matrix::from_element(1, 1, 1.0),
            c0: Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
            a1: Matrix::from_element(1, 1, -1.0),
            e1: Matrix::from_row_slice(1, 2, &[0.5, 0.5]),
            c1: Matrix::from_element(1, 1, 0.5),
            r: Matrix::from_row_slice(1, 2, &[0.3, 0.2]),
            q_mat: Matrix::from_row_slice(2, 1, &[0.4, 0.3]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::scalar_model;
    use super::*;
    use crate::numerics::uniform_grid;

    #[test]
    fn scalar_model_is_valid() {
        assert!(scalar_model(0.2, 0.1).validate().is_empty());
    }

    #[test]
    fn velocity_ordering() {
        let mut m = scalar_model(0.0, 0.0);
        m.n = 2;
        m.lambda = vec![2.0, 1.0];
        m.c0 = Matrix::zeros(2, 1);
        m.e1 = Matrix::zeros(1, 2);
        m.r = Matrix::zeros(1, 2);
        m.q_mat = Matrix::zeros(2, 1);
        let g = uniform_grid(2, 0.0, 1.0);
        m.sigma_pp = SampledFunction::zeros(g.clone(), 2, 2);
        m.sigma_pm = SampledFunction::zeros(g.clone(), 2, 1);
        m.sigma_mp = SampledFunction::zeros(g, 1, 2);
        assert_eq!(m.validate(), vec!["velocity ordering violated".to_string()]);
    }

    #[test]
    fn nonzero_diagonal() {
        let mut m = scalar_model(0.0, 0.0);
        m.sigma_pp = SampledFunction::constant(uniform_grid(3, 0.0, 1.0), Matrix::from_element(1, 1, 0.3));
        assert_eq!(m.validate(), vec!["nonzero diagonal in Sigma_pp".to_string()]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut m = scalar_model(0.0, 0.0);
        m.e1 = Matrix::zeros(2, 2);
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("E1"));
    }
}
