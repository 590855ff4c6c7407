use crate::error::{Error, Result};
use crate::numerics::uniform_grid;

/// Uniform grid of `[0,1]` whose node pairs `(a, b)` with `a ≤ b` cover the triangle `x ≤ ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriGrid {
    n: usize,
}

impl TriGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Invalid(format!("grid needs at least 3 points per axis, got {n}")));
        }
        Ok(Self { n })
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    #[inline]
    pub fn x(&self, k: usize) -> f64 {
        k as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        uniform_grid(self.n, 0.0, 1.0)
    }

    /// Number of nodes of the triangle.
    pub fn triangle_nodes(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// Grid with twice the resolution (`2(N−1)+1` points).
    pub fn refined(&self) -> Self {
        Self { n: 2 * (self.n - 1) + 1 }
    }
}

/// Linear interpolation of `f(k)` (node values on a uniform grid of spacing `h`) at `s`, clamped to
/// the node range `lo..=hi`.
#[inline]
pub(crate) fn interp_nodes(f: impl Fn(usize) -> f64, s: f64, h: f64, lo: usize, hi: usize) -> f64 {
    let r = s / h;
    if r <= lo as f64 {
        return f(lo);
    }
    if r >= hi as f64 {
        return f(hi);
    }
    let k = r.floor() as usize;
    let t = r - k as f64;
    if t < 1e-12 {
        f(k)
    } else if t > 1.0 - 1e-12 {
        f(k + 1)
    } else {
        f(k) * (1.0 - t) + f(k + 1) * t
    }
}


/// Piecewise-linear interpolation of entry `(i, j)` of a kernel stored on the triangle `a ≤ b`,
/// at `(x, ν)` with `x ≤ ν`. Each grid cell is split along its diagonal so diagonal cells only
/// touch nodes of the triangle.
pub fn interp_triangle(
    k: &crate::numerics::GridKernel,
    grid: &TriGrid,
    x: f64,
    nu: f64,
    i: usize,
    j: usize,
) -> f64 {
    let h = grid.h();
    let last = grid.n() - 1;
    let rx = (x / h).clamp(0.0, last as f64);
    let rn = (nu / h).clamp(rx, last as f64);
    let a = (rx.floor() as usize).min(last.saturating_sub(1));
    let b = (rn.floor() as usize).min(last.saturating_sub(1)).max(a);
    let (tx, tn) = (rx - a as f64, rn - b as f64);
    let f = |aa: usize, bb: usize| k.entry(aa, bb, i, j);
    if tn >= tx {
        // Triangle (a,b), (a,b+1), (a+1,b+1).
        f(a, b) * (1.0 - tn) + f(a, b + 1) * (tn - tx) + f(a + 1, b + 1) * tx
    } else {
        // Triangle (a,b), (a+1,b), (a+1,b+1); only reached off the diagonal cells.
        f(a, b) * (1.0 - tx) + f(a + 1, b) * (tx - tn) + f(a + 1, b + 1) * tn
    }
}

#[cfg(test)]
mod triangle_tests {
    use super::*;
    use crate::numerics::{GridKernel, Matrix};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn exact_for_affine(x in 0.0f64..1.0, d in 0.0f64..1.0, c0 in -1.0f64..1.0, c1 in -1.0f64..1.0) {
            let g = TriGrid::new(11).unwrap();
            let nu = x + d * (1.0 - x);
            let k = GridKernel::from_fn(11, 1, 1, |a, b| {
                Matrix::from_element(1, 1, if a <= b { c0 * g.x(a) + c1 * g.x(b) + 0.5 } else { f64::NAN })
            });
            let v = interp_triangle(&k, &g, x, nu, 0, 0);
            prop_assert!((v - (c0 * x + c1 * nu + 0.5)).abs() < 1e-12);
        }
    }
}
