use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Uniform grid of `n` points on `[a, b]`.
pub fn uniform_grid(n: usize, a: f64, b: f64) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|k| if k + 1 == n { b } else { a + h * k as f64 })
        .collect()
}

/// Composite trapezoid weights for a (possibly non-uniform) grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let dx = grid[k + 1] - grid[k];
        w[k] += 0.5 * dx;
        w[k + 1] += 0.5 * dx;
    }
    w
}

/// Locate `x` on a sorted grid: returns `(k, t)` such that `x ≈ grid[k] + t (grid[k+1]-grid[k])`
/// with `t ∈ [0, 1]`. Values outside the grid are clamped.
pub fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let k = match grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
        Ok(k) => k.min(n - 2),
        Err(k) => k - 1,
    };
    let t = (x - grid[k]) / (grid[k + 1] - grid[k]);
    (k, t.clamp(0.0, 1.0))
}

/// A matrix-valued function sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Vec<f64>,
    values: Vec<Matrix>,
}

impl SampledFunction {
    pub fn new(grid: Vec<f64>, values: Vec<Matrix>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Dimension("sampled function needs at least 2 grid points".into()));
        }
        if grid.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("grid must be strictly increasing".into()));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::Dimension("sampled values must share one shape".into()));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Invalid("sampled values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> Matrix) -> Self {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Vec<f64>, value: Matrix) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn zeros(grid: Vec<f64>, rows: usize, cols: usize) -> Self {
        Self::constant(grid, Matrix::zeros(rows, cols))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    pub fn at(&self, k: usize) -> &Matrix {
        &self.values[k]
    }

    /// Linear interpolation, clamped at the ends.
    pub fn eval(&self, x: f64) -> Matrix {
        let (k, t) = locate(&self.grid, x);
        if t == 0.0 {
            return self.values[k].clone();
        }
        &self.values[k] * (1.0 - t) + &self.values[k + 1] * t
    }

    /// Entry `(r, c)` interpolated at `x`.
    pub fn eval_entry(&self, x: f64, r: usize, c: usize) -> f64 {
        let (k, t) = locate(&self.grid, x);
        self.values[k][(r, c)] * (1.0 - t) + self.values[k + 1][(r, c)] * t
    }

    /// Resamples onto another grid by linear interpolation.
    pub fn resample(&self, grid: &[f64]) -> Self {
        Self::from_fn(grid.to_vec(), |x| self.eval(x))
    }

    pub fn map(&self, f: impl Fn(&Matrix) -> Matrix) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Sup over the grid of the max-abs entry.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Sup-norm distance to another function on the same grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Composite trapezoid integral of a sampled function over its whole interval.
pub fn trapezoid(f: &SampledFunction) -> Matrix {
    let w = trapezoid_weights(f.grid());
    let (r, c) = f.shape();
    let mut acc = Matrix::zeros(r, c);
    for (wk, v) in w.iter().zip(f.values()) {
        acc += v * *wk;
    }
    acc
}
