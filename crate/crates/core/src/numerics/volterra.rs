use crate::error::{Error, Result};
use crate::numerics::sampled::{trapezoid_weights, SampledFunction};
use crate::numerics::Matrix;

/// A matrix-valued function of two grid arguments `(x_a, x_b)` on the square `[0,1]²`, stored
/// densely. Triangular kernels only use the half they are defined on.
#[derive(Debug, Clone, PartialEq)]
pub struct GridKernel {
    n: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GridKernel {
    pub fn zeros(n: usize, rows: usize, cols: usize) -> Self {
        Self {
            n,
            rows,
            cols,
            data: vec![0.0; n * n * rows * cols],
        }
    }

    pub fn from_fn(n: usize, rows: usize, cols: usize, f: impl Fn(usize, usize) -> Matrix) -> Self {
        let mut k = Self::zeros(n, rows, cols);
        for a in 0..n {
            for b in 0..n {
                k.set(a, b, &f(a, b));
            }
        }
        k
    }

    /// Rebuilds a kernel from the storage returned by [`GridKernel::data`].
    pub fn from_raw(n: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n * rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} kernel on {n} nodes",
                data.len()
            )));
        }
        Ok(Self { n, rows, cols, data })
    }

    /// Node-major storage: node `(a, b)` occupies `rows·cols` row-major entries at `(a·n + b)`.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    fn offset(&self, a: usize, b: usize) -> usize {
        (a * self.n + b) * self.rows * self.cols
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize, r: usize, c: usize) -> f64 {
        self.data[self.offset(a, b) + r * self.cols + c]
    }

    #[inline]
    pub fn set_entry(&mut self, a: usize, b: usize, r: usize, c: usize, v: f64) {
        let o = self.offset(a, b);
        self.data[o + r * self.cols + c] = v;
    }

    /// Row-major block at node `(a, b)`.
    #[inline]
    pub fn block(&self, a: usize, b: usize) -> &[f64] {
        let o = self.offset(a, b);
        &self.data[o..o + self.rows * self.cols]
    }

    pub fn get(&self, a: usize, b: usize) -> Matrix {
        Matrix::from_row_slice(self.rows, self.cols, self.block(a, b))
    }

    pub fn set(&mut self, a: usize, b: usize, m: &Matrix) {
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.set_entry(a, b, r, c, m[(r, c)]);
            }
        }
    }

    /// Max-abs entry over nodes with `a ≤ b` (`upper_only`) or over all nodes.
    pub fn sup_norm(&self, upper_only: bool) -> f64 {
        let mut s: f64 = 0.0;
        for a in 0..self.n {
            let start = if upper_only { a } else { 0 };
            for b in start..self.n {
                for v in self.block(a, b) {
                    s = s.max(v.abs());
                }
            }
        }
        s
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Integration range of a second-kind Volterra equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolterraBounds {
    /// `g(x) = f(x) + ∫ₓ¹ K(x,ν) g(ν) dν`
    Upper,
    /// `g(x) = f(x) + ∫₀ˣ K(x,ν) g(ν) dν`
    Lower,
}

pub const VOLTERRA_TOL: f64 = 1e-10;
pub const VOLTERRA_MAX_ITER: usize = 500;

/// Solves `g = f + ∫ K g` by Picard iteration with composite trapezoid quadrature on the grid of
/// `forcing`. The kernel is `d×d` where `d` is the row count of the forcing values.
pub fn volterra2_solve(
    kernel: &GridKernel,
    forcing: &SampledFunction,
    bounds: VolterraBounds,
) -> Result<SampledFunction> {
    let grid = forcing.grid();
    let n = grid.len();
    let (d, c) = forcing.shape();
    if kernel.n() != n || kernel.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "volterra kernel is {}x{} on {} nodes, forcing is {}x{} on {} nodes",
            kernel.shape().0,
            kernel.shape().1,
            kernel.n(),
            d,
            c,
            n
        )));
    }
    let stride = d * c;
    let mut f = vec![0.0; n * stride];
    for (a, v) in forcing.values().iter().enumerate() {
        for r in 0..d {
            for cc in 0..c {
                f[a * stride + r * c + cc] = v[(r, cc)];
            }
        }
    }
    let mut g = f.clone();
    let mut next = vec![0.0; n * stride];
    let mut residual = f64::INFINITY;
    for it in 0..VOLTERRA_MAX_ITER {
        for a in 0..n {
            let range = match bounds {
                VolterraBounds::Upper => a..n,
                VolterraBounds::Lower => 0..a + 1,
            };
            let weights = trapezoid_weights(&grid[range.clone()]);
            let out = &mut next[a * stride..(a + 1) * stride];
            out.copy_from_slice(&f[a * stride..(a + 1) * stride]);
            if weights.len() < 2 {
                continue;
            }
            for (b, w) in range.zip(weights) {
                let kb = kernel.block(a, b);
                let gb = &g[b * stride..(b + 1) * stride];
                for r in 0..d {
                    for k in 0..d {
                        let kv = kb[r * d + k] * w;
                        if kv == 0.0 {
                            continue;
                        }
                        for cc in 0..c {
                            out[r * c + cc] += kv * gb[k * c + cc];
                        }
                    }
                }
            }
        }
        residual = next
            .iter()
            .zip(&g)
            .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()));
        std::mem::swap(&mut g, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= VOLTERRA_TOL {
            let values = (0..n)
                .map(|a| Matrix::from_row_slice(d, c, &g[a * stride..(a + 1) * stride]))
                .collect();
            return SampledFunction::new(grid.to_vec(), values);
        }
        let _ = it;
    }
    Err(Error::NoConvergence {
        what: "Volterra Picard iteration".into(),
        iterations: VOLTERRA_MAX_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sampled::uniform_grid;

    fn scalar(n: usize, f: impl Fn(f64) -> f64) -> SampledFunction {
        SampledFunction::from_fn(uniform_grid(n, 0.0, 1.0), |x| Matrix::from_element(1, 1, f(x)))
    }

    #[test]
    fn zero_kernel_returns_forcing() {
        let f = scalar(21, |x| x.sin());
        let g = volterra2_solve(&GridKernel::zeros(21, 1, 1), &f, VolterraBounds::Upper).unwrap();
        assert!(g.sup_distance(&f) == 0.0);
    }

    #[test]
    fn exponential_lower() {
        let n = 201;
        let k = GridKernel::from_fn(n, 1, 1, |_, _| Matrix::from_element(1, 1, 1.0));
        let g = volterra2_solve(&k, &scalar(n, |_| 1.0), VolterraBounds::Lower).unwrap();
        let exact = scalar(n, f64::exp);
        assert!(g.sup_distance(&exact) <= 1e-4);
    }

    #[test]
    fn exponential_upper_refines() {
        // Self-oracle: refine until successive solutions agree to 1e-6, then compare.
        let solve = |n: usize| {
            let k = GridKernel::from_fn(n, 1, 1, |_, _| Matrix::from_element(1, 1, 1.0));
            volterra2_solve(&k, &scalar(n, |_| 1.0), VolterraBounds::Upper).unwrap()
        };
        let g401 = solve(401);
        let mut n = 401;
        let mut prev = g401.clone();
        loop {
            let finer_n = 2 * (n - 1) + 1;
            let finer = solve(finer_n).resample(g401.grid());
            let diff = finer.sup_distance(&prev);
            prev = finer;
            n = finer_n;
            if diff <= 1e-6 || n > 6401 {
                break;
            }
        }
        assert!(g401.sup_distance(&prev) <= 1e-5);
        assert!(g401.sup_distance(&scalar(401, |x| (1.0 - x).exp())) <= 1e-5);
    }

    #[test]
    fn error_shrinks_with_grid() {
        let err = |n: usize| {
            let k = GridKernel::from_fn(n, 1, 1, |_, _| Matrix::from_element(1, 1, 1.0));
            let g = volterra2_solve(&k, &scalar(n, |_| 1.0), VolterraBounds::Lower).unwrap();
            g.sup_distance(&scalar(n, f64::exp))
        };
        let (e1, e2) = (err(51), err(101));
        assert!(e1 / e2 >= 2.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn dimension_mismatch() {
        let f = scalar(11, |x| x);
        assert!(volterra2_solve(&GridKernel::zeros(11, 2, 2), &f, VolterraBounds::Lower).is_err());
    }
}
