use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{trapezoid_weights, uniform_grid, Matrix, SampledFunction};
use crate::sim::HistoryBuffer;

/// Delays closer than this are merged into one tap.
const TAP_MERGE: f64 = 1e-12;

/// Three-point Gauss–Legendre nodes and weights on `[0, 1]`.
const GAUSS: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// `s ↦ Σ_d M_d s(t−d) + ∫₀^Θ K(θ) s(t−θ) dθ`.
///
/// The kernel is held as node masses `∫ K φ_k` against the hat functions `φ_k` of a uniform grid
/// of `[0, Θ]`, so jumps of `K` between nodes cost nothing beyond second order on smooth signals.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayOperator {
    taps: Vec<(f64, Matrix)>,
    horizon: f64,
    mass: Vec<Matrix>,
}

impl DelayOperator {
    pub fn zeros(rows: usize, cols: usize, horizon: f64, points: usize) -> Self {
        Self {
            taps: Vec::new(),
            horizon,
            mass: vec![Matrix::zeros(rows, cols); points],
        }
    }

    /// From taps and a kernel sampled on a uniform grid of `[0, Θ]` (trapezoid masses).
    pub fn new(taps: Vec<(f64, Matrix)>, kernel: &SampledFunction) -> Result<Self> {
        let (rows, cols) = kernel.shape();
        let mut op = Self::zeros(rows, cols, kernel.interval().1, kernel.len());
        let w = trapezoid_weights(kernel.grid());
        for ((m, v), wk) in op.mass.iter_mut().zip(kernel.values()).zip(w) {
            *m = v * wk;
        }
        for (d, m) in taps {
            if m.shape() != (rows, cols) {
                return Err(Error::Dimension("tap matrix does not match the kernel".into()));
            }
            op.add_tap(d, &m)?;
        }
        Ok(op)
    }

    /// Taps sorted by increasing delay.
    pub fn taps(&self) -> &[(f64, Matrix)] {
        &self.taps
    }

    /// Node masses of the distributed part.
    pub fn masses(&self) -> &[Matrix] {
        &self.mass
    }

    /// Kernel density recovered from the masses.
    pub fn kernel(&self) -> SampledFunction {
        let last = self.points() - 1;
        let delta = self.delta();
        let values = self
            .mass
            .iter()
            .enumerate()
            .map(|(k, m)| m / if k == 0 || k == last { 0.5 * delta } else { delta })
            .collect();
        SampledFunction::new(self.grid(), values).expect("grid and masses agree")
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.points(), 0.0, self.horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mass[0].shape()
    }

    pub fn points(&self) -> usize {
        self.mass.len()
    }

    pub fn delta(&self) -> f64 {
        self.horizon / (self.points() - 1) as f64
    }

    pub fn is_zero(&self) -> bool {
        self.taps.iter().all(|(_, m)| m.amax() == 0.0) && self.mass.iter().all(|m| m.amax() == 0.0)
    }

    /// Sum of every tap and of the distributed part: the response to a constant signal.
    pub fn total(&self) -> Matrix {
        let mut acc = Matrix::zeros(self.shape().0, self.shape().1);
        for (_, m) in &self.taps {
            acc += m;
        }
        for m in &self.mass {
            acc += m;
        }
        acc
    }

    /// The value on a history: taps and node masses read by interpolation.
    pub fn apply(&self, history: &HistoryBuffer, t: f64) -> Result<DVector<f64>> {
        let (rows, cols) = self.shape();
        if history.dim() != cols {
            return Err(Error::Dimension(format!(
                "operator acts on {cols}-vectors, history holds {}",
                history.dim()
            )));
        }
        let mut out = DVector::zeros(rows);
        for (d, m) in &self.taps {
            out += m * history.at(t - d)?;
        }
        let delta = self.delta();
        for (k, m) in self.mass.iter().enumerate() {
            if m.amax() != 0.0 {
                out += m * history.at(t - k as f64 * delta)?;
            }
        }
        Ok(out)
    }

    /// Same operator acting on the column block `c0..c0+nc`.
    pub fn columns(&self, c0: usize, nc: usize) -> Self {
        Self {
            taps: self
                .taps
                .iter()
                .map(|(d, m)| (*d, m.columns(c0, nc).into_owned()))
                .filter(|(_, m)| m.amax() != 0.0)
                .collect(),
            horizon: self.horizon,
            mass: self.mass.iter().map(|m| m.columns(c0, nc).into_owned()).collect(),
        }
    }

    pub(crate) fn add_tap(&mut self, d: f64, m: &Matrix) -> Result<()> {
        if !(-TAP_MERGE..=self.horizon + 1e-9).contains(&d) {
            return Err(Error::Consistency(format!("tap delay {d} outside [0, {}]", self.horizon)));
        }
        let d = d.max(0.0);
        match self.taps.iter_mut().find(|(e, _)| (e - d).abs() <= TAP_MERGE) {
            Some((_, existing)) => *existing += m,
            None => {
                self.taps.push((d, m.clone()));
                self.taps.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        Ok(())
    }

    /// Hat masses of `f` restricted to `[lo, hi]`, by Gauss quadrature on every cell piece.
    pub(crate) fn deposit_into(mass: &mut [Matrix], delta: f64, lo: f64, hi: f64, f: impl Fn(f64) -> Matrix) {
        let last = mass.len() - 1;
        let hi = hi.min(last as f64 * delta);
        let lo = lo.max(0.0);
        if hi - lo <= 1e-14 {
            return;
        }
        let c0 = ((lo / delta).floor() as usize).min(last - 1);
        let c1 = (((hi / delta) - 1e-12).floor().max(0.0) as usize).min(last - 1);
        for c in c0..=c1 {
            let (x0, x1) = (c as f64 * delta, (c + 1) as f64 * delta);
            let (a, b) = (lo.max(x0), hi.min(x1));
            if b - a <= 1e-14 {
                continue;
            }
            for (g, wg) in GAUSS {
                let s = a + g * (b - a);
                let v = f(s) * (wg * (b - a));
                let r = (s - x0) / delta;
                mass[c] += &v * (1.0 - r);
                mass[c + 1] += v * r;
            }
        }
    }

    /// Adds `f(θ)` for `θ ≤ support` to the kernel.
    pub(crate) fn add_kernel_fn(&mut self, support: f64, f: impl Fn(f64) -> Matrix) {
        let delta = self.delta();
        Self::deposit_into(&mut self.mass, delta, 0.0, support, f);
    }

    pub(crate) fn add_assign(&mut self, other: &Self) -> Result<()> {
        if other.shape() != self.shape() || other.points() != self.points() || other.horizon != self.horizon {
            return Err(Error::Dimension("operators live on different grids".into()));
        }
        for (d, m) in &other.taps {
            self.add_tap(*d, m)?;
        }
        for (v, o) in self.mass.iter_mut().zip(&other.mass) {
            *v += o;
        }
        Ok(())
    }

    pub(crate) fn from_masses(horizon: f64, mass: Vec<Matrix>) -> Self {
        Self {
            taps: Vec::new(),
            horizon,
            mass,
        }
    }

    /// `op · M`.
    pub(crate) fn postmul(&self, m: &Matrix) -> Self {
        Self {
            taps: self.taps.iter().map(|(d, t)| (*d, t * m)).collect(),
            horizon: self.horizon,
            mass: self.mass.iter().map(|v| v * m).collect(),
        }
    }

    /// Side-by-side operators on the same grid, acting on the concatenated signal.
    pub(crate) fn hstack(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Dimension("nothing to stack".into()))?;
        let rows = first.shape().0;
        let cols: usize = parts.iter().map(|o| o.shape().1).sum();
        let mut out = Self::zeros(rows, cols, first.horizon, first.points());
        let mut c0 = 0;
        for o in parts {
            if o.shape().0 != rows || o.points() != first.points() || o.horizon != first.horizon {
                return Err(Error::Dimension("operators live on different grids".into()));
            }
            let nc = o.shape().1;
            let widen = |m: &Matrix| {
                let mut w = Matrix::zeros(rows, cols);
                w.view_mut((0, c0), (rows, nc)).copy_from(m);
                w
            };
            for (d, m) in &o.taps {
                out.add_tap(*d, &widen(m))?;
            }
            for (v, m) in out.mass.iter_mut().zip(&o.mass) {
                *v += widen(m);
            }
            c0 += nc;
        }
        Ok(out)
    }

    /// Weight that [`apply`](Self::apply) puts on the newest sample of a history sampled every
    /// `dt`: the part of the operator that is implicit when that sample is still being solved for.
    pub fn weight_on_latest(&self, dt: f64) -> Matrix {
        let mut acc = Matrix::zeros(self.shape().0, self.shape().1);
        let delta = self.delta();
        let hits = self
            .taps
            .iter()
            .map(|(d, m)| (*d, m))
            .chain(self.mass.iter().enumerate().map(|(k, m)| (k as f64 * delta, m)));
        for (d, m) in hits {
            if d < dt {
                acc += m * (1.0 - d / dt);
            }
        }
        acc
    }

    /// `M · op`.
    pub(crate) fn premul(&self, m: &Matrix) -> Self {
        Self {
            taps: self.taps.iter().map(|(d, t)| (*d, m * t)).collect(),
            horizon: self.horizon,
            mass: self.mass.iter().map(|v| m * v).collect(),
        }
    }

    /// Adds `m` at position `pos` (in cells), split linearly between the neighbouring nodes.
    fn spill(mass: &mut [Matrix], pos: f64, m: &Matrix) -> Result<()> {
        let last = mass.len() - 1;
        if pos > last as f64 + 2.0 + 1e-9 {
            if m.amax() == 0.0 {
                return Ok(());
            }
            return Err(Error::Consistency(format!(
                "kernel mass reaches {pos} cells, beyond the {last}-cell horizon"
            )));
        }
        if pos >= last as f64 {
            mass[last] += m;
            return Ok(());
        }
        let k = pos.floor() as usize;
        let f = pos - k as f64;
        if f < 1e-12 {
            mass[k] += m;
        } else {
            mass[k] += m * (1.0 - f);
            mass[k + 1] += m * f;
        }
        Ok(())
    }

    /// The operator delayed by `d`: `s ↦ op[s](t − d)`.
    pub(crate) fn shifted(&self, d: f64) -> Result<Self> {
        let (rows, cols) = self.shape();
        let mut out = Self::zeros(rows, cols, self.horizon, self.points());
        for (e, m) in &self.taps {
            out.add_tap(e + d, m)?;
        }
        let cells = d / self.delta();
        for (k, m) in self.mass.iter().enumerate() {
            Self::spill(&mut out.mass, k as f64 + cells, m)?;
        }
        Ok(out)
    }

    /// `s ↦ ∫₀^a w(σ) op[s](t − σ) dσ`.
    pub(crate) fn convolved(&self, a: f64, w: impl Fn(f64) -> Matrix) -> Result<Self> {
        let (_, cols) = self.shape();
        let rows = w(0.0).nrows();
        let npts = self.points();
        let delta = self.delta();
        let mut out = Self::zeros(rows, cols, self.horizon, npts);
        for (d, m) in &self.taps {
            if d + a > self.horizon + 1e-9 {
                return Err(Error::Consistency(format!(
                    "distributed delay reaches {} beyond the horizon {}",
                    d + a,
                    self.horizon
                )));
            }
            let d = *d;
            Self::deposit_into(&mut out.mass, delta, d, d + a, |s| w(s - d) * m);
        }
        let occupied: Vec<usize> = (0..npts).filter(|&j| self.mass[j].amax() != 0.0).collect();
        if occupied.is_empty() {
            return Ok(out);
        }
        let mut wm = vec![Matrix::zeros(rows, self.shape().0); npts + 1];
        Self::deposit_into(&mut wm, delta, 0.0, a, &w);
        let reach = wm.iter().rposition(|m| m.amax() != 0.0).unwrap_or(0);
        for &j in &occupied {
            for (i, wi) in wm.iter().enumerate().take(reach + 1) {
                Self::spill(&mut out.mass, (i + j) as f64, &(wi * &self.mass[j]))?;
            }
        }
        Ok(out)
    }

    /// Taps as `(delay, row, col, value)` rows, then the kernel density as `(θ, row, col, value)`
    /// rows, told apart by a `kind` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "kind,delay,row,col,value")?;
        for (d, m) in &self.taps {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    writeln!(f, "tap,{d:e},{r},{c},{:e}", m[(r, c)])?;
                }
            }
        }
        let kernel = self.kernel();
        for (theta, m) in kernel.grid().iter().zip(kernel.values()) {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    writeln!(f, "kernel,{theta:e},{r},{c},{:e}", m[(r, c)])?;
                }
            }
        }
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(dt: f64, t_end: f64, f: impl Fn(f64) -> f64) -> HistoryBuffer {
        let mut h = HistoryBuffer::new(1, dt, t_end + 1.0, 0.0, false);
        let steps = (t_end / dt).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * dt;
            h.push(t, DVector::from_element(1, f(t))).unwrap();
        }
        h
    }

    fn one(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn taps_merge_and_sort() {
        let mut op = DelayOperator::zeros(1, 1, 2.0, 41);
        op.add_tap(1.0, &one(1.0)).unwrap();
        op.add_tap(0.5, &one(2.0)).unwrap();
        op.add_tap(1.0, &one(3.0)).unwrap();
        assert_eq!(op.taps(), &[(0.5, one(2.0)), (1.0, one(4.0))]);
        assert!(op.add_tap(2.5, &one(1.0)).is_err());
    }

    #[test]
    fn apply_constant_history() {
        let mut op = DelayOperator::zeros(1, 1, 1.0, 101);
        op.add_tap(0.3, &one(2.0)).unwrap();
        op.add_kernel_fn(1.0, |_| one(1.5));
        let h = history(0.01, 3.0, |_| 1.0);
        let v = op.apply(&h, 2.0).unwrap()[0];
        assert!((v - 3.5).abs() < 1e-12);
        assert!(op.apply(&h, 3.5).is_err());
    }

    #[test]
    fn shift_moves_taps_and_kernel() {
        let mut op = DelayOperator::zeros(1, 1, 2.0, 201);
        op.add_tap(0.2, &one(1.0)).unwrap();
        op.add_kernel_fn(0.5, |t| one(t));
        let s = op.shifted(0.5).unwrap();
        assert_eq!(s.taps(), &[(0.7, one(1.0))]);
        assert!((s.kernel().eval(0.8)[(0, 0)] - 0.3).abs() < 1e-12);
        assert_eq!(s.kernel().eval(0.3)[(0, 0)], 0.0);
        assert!(op.shifted(1.8).is_err());
        // Masses and first moments survive a fractional shift.
        let f = op.shifted(0.123).unwrap();
        assert!((f.total() - op.total()).amax() < 1e-12);
        let moment = |o: &DelayOperator| {
            o.masses().iter().enumerate().map(|(k, m)| k as f64 * o.delta() * m[(0, 0)]).sum::<f64>()
        };
        let mass = op.masses().iter().map(|m| m[(0, 0)]).sum::<f64>();
        assert!((moment(&f) - moment(&op) - 0.123 * mass).abs() < 1e-12);
    }

    #[test]
    fn convolution_of_a_tap_and_a_kernel() {
        // w ≡ 1 on [0, 0.5] against a unit tap at 0.25 is a box on [0.25, 0.75].
        let mut op = DelayOperator::zeros(1, 1, 2.0, 401);
        op.add_tap(0.25, &one(1.0)).unwrap();
        let c = op.convolved(0.5, |_| one(1.0)).unwrap();
        assert!(c.taps().is_empty());
        assert!((c.kernel().eval(0.5)[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(c.kernel().eval(0.8)[(0, 0)], 0.0);
        // Box * box on [0, 0.5] is the hat of height 0.5 centred at 0.5.
        let mut b = DelayOperator::zeros(1, 1, 2.0, 401);
        b.add_kernel_fn(0.5, |_| one(1.0));
        let hat = b.convolved(0.5, |_| one(1.0)).unwrap();
        for x in [0.1, 0.25, 0.5, 0.7, 0.9] {
            let exact: f64 = if x <= 0.5 { x } else { (1.0 - x).max(0.0) };
            assert!((hat.kernel().eval(x)[(0, 0)] - exact).abs() < 1e-2, "{x}");
        }
    }

    #[test]
    fn columns_split() {
        let mut op = DelayOperator::zeros(1, 2, 1.0, 11);
        op.add_tap(0.5, &Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(op.columns(1, 1).taps().len(), 0);
        assert_eq!(op.columns(0, 1).taps().len(), 1);
    }
}
