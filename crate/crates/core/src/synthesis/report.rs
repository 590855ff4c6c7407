//! JSON form of a synthesis (schema `hyperstab-synthesis-v1`).
//!
//! Matrices are arrays of rows. Delay operators keep their taps inline and refer to a CSV (written
//! by [`DelayOperator::write_csv`]) for the distributed kernel; kernel sets are likewise listed by
//! file name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::delayform::DelayOperator;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::synthesis::{FullSynthesis, LowPassFilter, SweepPoint};

pub const SYNTHESIS_SCHEMA: &str = "hyperstab-synthesis-v1";

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapRecord {
    pub delay: f64,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub rows: usize,
    pub cols: usize,
    pub horizon: f64,
    pub points: usize,
    pub taps: Vec<TapRecord>,
    pub csv: String,
}

impl OperatorRecord {
    fn new(op: &DelayOperator, csv: &str) -> Self {
        let (r, c) = op.shape();
        Self {
            rows: r,
            cols: c,
            horizon: op.horizon(),
            points: op.points(),
            taps: op
                .taps()
                .iter()
                .map(|(d, m)| TapRecord {
                    delay: *d,
                    matrix: rows(m),
                })
                .collect(),
            csv: csv.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverRecord {
    pub a_o: Vec<Vec<f64>>,
    pub g_z: Vec<Vec<f64>>,
    pub c_eff: Vec<Vec<f64>>,
    pub l_o: Vec<Vec<f64>>,
    pub margin: f64,
    pub abscissa: f64,
    pub o0: OperatorRecord,
    pub duhamel: OperatorRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRecord {
    pub a_c: Vec<Vec<f64>>,
    pub b_bar: Vec<Vec<f64>>,
    pub e0_bar: Vec<Vec<f64>>,
    pub e1_bar: Vec<Vec<f64>>,
    pub k_c: Vec<Vec<f64>>,
    pub c0: Vec<Vec<f64>>,
    pub gamma0: Vec<Vec<f64>>,
    pub margin: f64,
    pub abscissa: f64,
    pub predictor: OperatorRecord,
    pub p_alpha: OperatorRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub order: usize,
    pub omega_c: f64,
    /// Magnitude at `100 ω_c` relative to DC.
    pub roll_off: f64,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub schema: String,
    pub n_grid: usize,
    pub observer: ObserverRecord,
    pub controller: ControllerRecord,
    pub filter: Option<FilterRecord>,
    pub kernel_csvs: Vec<String>,
}

/// Operator CSV file names, in the order [`SynthesisResult::write_operator_csvs`] writes them.
const OPERATOR_FILES: [&str; 4] = ["o0.csv", "duhamel.csv", "predictor.csv", "p_alpha.csv"];

impl SynthesisResult {
    pub fn new(syn: &FullSynthesis, filter: Option<(LowPassFilter, Vec<SweepPoint>)>, kernel_csvs: Vec<String>) -> Self {
        let (o, c) = (&syn.observer, &syn.controller);
        Self {
            schema: SYNTHESIS_SCHEMA.into(),
            n_grid: syn.options.n_grid,
            observer: ObserverRecord {
                a_o: rows(&o.a_o),
                g_z: rows(&o.g_z),
                c_eff: rows(&o.c_eff),
                l_o: rows(&o.l_o),
                margin: o.margin,
                abscissa: o.abscissa,
                o0: OperatorRecord::new(&o.o0, OPERATOR_FILES[0]),
                duhamel: OperatorRecord::new(&o.duhamel, OPERATOR_FILES[1]),
            },
            controller: ControllerRecord {
                a_c: rows(&c.a_c),
                b_bar: rows(&c.b_bar),
                e0_bar: rows(&c.e0_bar),
                e1_bar: rows(&c.e1_bar),
                k_c: rows(&c.k_c),
                c0: rows(&c.c0),
                gamma0: rows(&c.gamma0),
                margin: c.margin,
                abscissa: c.abscissa,
                predictor: OperatorRecord::new(&c.predictor, OPERATOR_FILES[2]),
                p_alpha: OperatorRecord::new(&c.p_alpha, OPERATOR_FILES[3]),
            },
            filter: filter.map(|(f, sweep)| FilterRecord {
                order: f.order,
                omega_c: f.omega_c,
                roll_off: f.magnitude(100.0 * f.omega_c) / f.dc_gain(),
                sweep,
            }),
            kernel_csvs,
        }
    }

    /// Writes the kernels the record refers to into `dir`.
    pub fn write_operator_csvs(syn: &FullSynthesis, dir: &Path) -> Result<Vec<PathBuf>> {
        let ops = [
            &syn.observer.o0,
            &syn.observer.duhamel,
            &syn.controller.predictor,
            &syn.controller.p_alpha,
        ];
        let mut out = Vec::new();
        for (op, name) in ops.into_iter().zip(OPERATOR_FILES) {
            let path = dir.join(name);
            op.write_csv(&path)?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("synthesis record serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema != SYNTHESIS_SCHEMA {
            return Err(Error::Invalid(format!("unknown synthesis schema {:?}", r.schema)));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_model;
    use crate::synthesis::{synthesize, SynthesisOptions};

    #[test]
    fn json_round_trip() {
        let syn = synthesize(&scalar_model(0.4, -0.3), SynthesisOptions::new(21)).unwrap();
        let f = LowPassFilter::butterworth2(8.0).unwrap();
        let sweep = vec![SweepPoint {
            omega_c: 8.0,
            ratio: 1e-3,
            meets: true,
        }];
        let r = SynthesisResult::new(&syn, Some((f, sweep)), vec!["l1.csv".into()]);
        let back = SynthesisResult::from_json_str(&r.to_json_string()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.controller.k_c[0][0], syn.controller.k_c[(0, 0)]);
        assert!(back.filter.unwrap().roll_off <= 1e-3);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let syn = synthesize(&scalar_model(0.0, 0.0), SynthesisOptions::new(11)).unwrap();
        let mut r = SynthesisResult::new(&syn, None, vec![]);
        r.schema = "other".into();
        assert!(SynthesisResult::from_json_str(&r.to_json_string()).is_err());
    }
}
