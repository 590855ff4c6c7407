use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Uniformly sampled past of a vector signal, read by linear interpolation.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dim: usize,
    dt: f64,
    span: f64,
    t_start: f64,
    zero_past: bool,
    t_first: f64,
    samples: VecDeque<DVector<f64>>,
}

impl HistoryBuffer {
    /// Keeps at least `span` of past. With `zero_past` the signal reads as zero before `t_start`.
    pub fn new(dim: usize, dt: f64, span: f64, t_start: f64, zero_past: bool) -> Self {
        Self {
            dim,
            dt,
            span,
            t_start,
            zero_past,
            t_first: t_start,
            samples: VecDeque::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest_time(&self) -> Option<f64> {
        (!self.samples.is_empty()).then(|| self.t_first + (self.samples.len() - 1) as f64 * self.dt)
    }

    pub fn latest(&self) -> Option<&DVector<f64>> {
        self.samples.back()
    }

    /// Earliest time that can be read.
    pub fn earliest_time(&self) -> f64 {
        if self.zero_past && self.t_first <= self.t_start {
            f64::NEG_INFINITY
        } else {
            self.t_first
        }
    }

    pub fn push(&mut self, t: f64, v: DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension(format!("history holds {}-vectors, got {}", self.dim, v.len())));
        }
        match self.latest_time() {
            None => self.t_first = t,
            Some(last) => {
                if ((t - last) - self.dt).abs() > 1e-9 * self.dt.max(1.0) {
                    return Err(Error::Precondition(format!(
                        "history sample at {t} does not follow {last} by dt = {}",
                        self.dt
                    )));
                }
            }
        }
        self.samples.push_back(v);
        let keep = (self.span / self.dt).ceil() as usize + 4;
        while self.samples.len() > keep {
            self.samples.pop_front();
            self.t_first += self.dt;
        }
        Ok(())
    }

    /// Replaces the newest sample.
    pub fn overwrite_latest(&mut self, v: DVector<f64>) -> Result<()> {
        match self.samples.back_mut() {
            Some(last) if v.len() == self.dim => {
                *last = v;
                Ok(())
            }
            _ => Err(Error::Precondition("no sample to overwrite".into())),
        }
    }

    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        let last = self
            .latest_time()
            .ok_or_else(|| Error::Precondition("history is empty".into()))?;
        let eps = 1e-9 * self.dt;
        if t > last + eps {
            return Err(Error::Precondition(format!("history read at {t} beyond the latest sample {last}")));
        }
        if t < self.t_first - eps {
            if self.zero_past && self.t_first <= self.t_start + eps && t < self.t_start {
                return Ok(DVector::zeros(self.dim));
            }
            return Err(Error::Precondition(format!(
                "history read at {t} before the earliest retained sample {}",
                self.t_first
            )));
        }
        let s = ((t - self.t_first) / self.dt).max(0.0);
        let k = s.floor() as usize;
        if k + 1 >= self.samples.len() {
            return Ok(self.samples[self.samples.len() - 1].clone());
        }
        let f = s - k as f64;
        if f < 1e-12 {
            return Ok(self.samples[k].clone());
        }
        Ok(&self.samples[k] * (1.0 - f) + &self.samples[k + 1] * f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_guards_span() {
        let mut h = HistoryBuffer::new(1, 0.1, 0.5, 0.0, false);
        for k in 0..20 {
            h.push(k as f64 * 0.1, DVector::from_element(1, k as f64)).unwrap();
        }
        assert!((h.at(1.85).unwrap()[0] - 18.5).abs() < 1e-9);
        assert!(h.at(1.0).is_err());
        assert!(h.at(2.0).is_err());
        assert!(h.push(5.0, DVector::zeros(1)).is_err());
    }

    #[test]
    fn zero_past() {
        let mut h = HistoryBuffer::new(2, 0.1, 1.0, 0.0, true);
        h.push(0.0, DVector::from_element(2, 1.0)).unwrap();
        assert_eq!(h.at(-0.5).unwrap(), DVector::zeros(2));
        assert_eq!(h.at(0.0).unwrap()[1], 1.0);
    }
}
