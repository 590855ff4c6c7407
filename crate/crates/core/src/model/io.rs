//! JSON form of a [`PlantModel`] (schema `hyperstab-model-v1`).
//!
//! ```json
//! {
//!   "schema": "hyperstab-model-v1",
//!   "n": 1, "m": 1, "p": 1, "q": 1,
//!   "lambda": [1.0], "mu": [1.5],
//!   "sigma_pp": "zero",
//!   "sigma_pm": [[0.2]],
//!   "sigma_mp": {"grid": [0.0, 0.5, 1.0], "values": [[0.1], [0.2], [0.1]]},
//!   "sigma_mm": "zero",
//!   "a0": [[0.5]], "e0": [[1.0]], "c0": [[1.0]],
//!   "a1": [[-1.0]], "e1": [[0.5]], "c1": [[0.5]],
//!   "r": [[0.4]], "q_mat": [[0.3]]
//! }
//! ```
//!
//! Constant matrices are arrays of rows. A sampled coupling lists one row-major flattened matrix
//! per grid node; its grid must start at 0 and end at 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PlantModel;
use crate::numerics::{Matrix, SampledFunction};

pub const MODEL_SCHEMA: &str = "hyperstab-model-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingSpec {
    /// Must be the string `"zero"`.
    Zero(String),
    Constant(Vec<Vec<f64>>),
    Sampled { grid: Vec<f64>, values: Vec<Vec<f64>> },
}

impl CouplingSpec {
    pub fn zero() -> Self {
        CouplingSpec::Zero("zero".into())
    }

    fn from_sampled(f: &SampledFunction) -> Self {
        let first = f.at(0);
        if f.values().iter().all(|v| v == first) {
            if first.iter().all(|v| *v == 0.0) {
                return Self::zero();
            }
            return CouplingSpec::Constant(rows_of(first));
        }
        CouplingSpec::Sampled {
            grid: f.grid().to_vec(),
            values: f.values().iter().map(row_major).collect(),
        }
    }

    fn to_sampled(&self, name: &str, rows: usize, cols: usize) -> Result<SampledFunction> {
        let unit = vec![0.0, 1.0];
        match self {
            CouplingSpec::Zero(s) if s == "zero" => Ok(SampledFunction::zeros(unit, rows, cols)),
            CouplingSpec::Zero(s) => Err(Error::Invalid(format!(
                "{name}: unknown coupling keyword {s:?} (expected \"zero\")"
            ))),
            CouplingSpec::Constant(r) => {
                let m = matrix_from_rows(name, r, rows, cols)?;
                Ok(SampledFunction::constant(unit, m))
            }
            CouplingSpec::Sampled { grid, values } => {
                if grid.len() != values.len() {
                    return Err(Error::Invalid(format!(
                        "{name}: {} grid points but {} values",
                        grid.len(),
                        values.len()
                    )));
                }
                let mats = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        if v.len() != rows * cols {
                            return Err(Error::Invalid(format!(
                                "{name}: value {k} has {} entries, expected {}",
                                v.len(),
                                rows * cols
                            )));
                        }
                        Ok(Matrix::from_row_slice(rows, cols, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                SampledFunction::new(grid.clone(), mats)
                    .map_err(|e| Error::Invalid(format!("{name}: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma_pp: CouplingSpec,
    pub sigma_pm: CouplingSpec,
    pub sigma_mp: CouplingSpec,
    pub sigma_mm: CouplingSpec,
    pub a0: Vec<Vec<f64>>,
    pub e0: Vec<Vec<f64>>,
    pub c0: Vec<Vec<f64>>,
    pub a1: Vec<Vec<f64>>,
    pub e1: Vec<Vec<f64>>,
    pub c1: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub q_mat: Vec<Vec<f64>>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn row_major(m: &Matrix) -> Vec<f64> {
    m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], nr: usize, nc: usize) -> Result<Matrix> {
    // An empty array is accepted for a matrix with a zero dimension.
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        let got_c = rows.first().map_or(0, Vec::len);
        return Err(Error::Invalid(format!(
            "{name} is {}x{got_c}, expected {nr}x{nc}",
            rows.len()
        )));
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl ModelDocument {
    pub fn from_model(model: &PlantModel) -> Self {
        Self {
            schema: MODEL_SCHEMA.into(),
            n: model.n,
            m: model.m,
            p: model.p,
            q: model.q,
            lambda: model.lambda.clone(),
            mu: model.mu.clone(),
            sigma_pp: CouplingSpec::from_sampled(&model.sigma_pp),
            sigma_pm: CouplingSpec::from_sampled(&model.sigma_pm),
            sigma_mp: CouplingSpec::from_sampled(&model.sigma_mp),
            sigma_mm: CouplingSpec::from_sampled(&model.sigma_mm),
            a0: rows_of(&model.a0),
            e0: rows_of(&model.e0),
            c0: rows_of(&model.c0),
            a1: rows_of(&model.a1),
            e1: rows_of(&model.e1),
            c1: rows_of(&model.c1),
            r: rows_of(&model.r),
            q_mat: rows_of(&model.q_mat),
        }
    }

    /// Builds the model and runs [`PlantModel::validate`]; any violation is an error.
    pub fn to_model(&self) -> Result<PlantModel> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::Invalid(format!(
                "unsupported schema {:?}, expected {MODEL_SCHEMA:?}",
                self.schema
            )));
        }
        let (n, m, p, q) = (self.n, self.m, self.p, self.q);
        let model = PlantModel {
            n,
            m,
            p,
            q,
            lambda: self.lambda.clone(),
            mu: self.mu.clone(),
            sigma_pp: self.sigma_pp.to_sampled("sigma_pp", n, n)?,
            sigma_pm: self.sigma_pm.to_sampled("sigma_pm", n, m)?,
            sigma_mp: self.sigma_mp.to_sampled("sigma_mp", m, n)?,
            sigma_mm: self.sigma_mm.to_sampled("sigma_mm", m, m)?,
            a0: matrix_from_rows("a0", &self.a0, p, p)?,
            e0: matrix_from_rows("e0", &self.e0, p, m)?,
            c0: matrix_from_rows("c0", &self.c0, n, p)?,
            a1: matrix_from_rows("a1", &self.a1, q, q)?,
            e1: matrix_from_rows("e1", &self.e1, q, n)?,
            c1: matrix_from_rows("c1", &self.c1, m, q)?,
            r: matrix_from_rows("r", &self.r, m, n)?,
            q_mat: matrix_from_rows("q_mat", &self.q_mat, n, m)?,
        };
        let violations = model.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        Ok(model)
    }
}

impl PlantModel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<ModelDocument>(s)?.to_model()
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        serde_json::from_value::<ModelDocument>(v)?.to_model()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ModelDocument::from_model(self)).expect("model document serializes")
    }

    /// Compact canonical JSON, used as a cache key.
    pub fn to_json_string(&self) -> String {
        self.to_json_value().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_model;

    #[test]
    fn round_trip_constant() {
        let model = scalar_model(0.2, -0.1);
        let back = PlantModel::from_json_str(&model.to_json_string()).unwrap();
        assert_eq!(ModelDocument::from_model(&back), ModelDocument::from_model(&model));
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"{
          "schema": "hyperstab-model-v1",
          "n": 1, "m": 1, "p": 1, "q": 1,
          "lambda": [1.0], "mu": [1.5],
          "sigma_pp": "zero",
          "sigma_pm": [[0.2]],
          "sigma_mp": {"grid": [0.0, 0.5, 1.0], "values": [[0.1], [0.2], [0.1]]},
          "sigma_mm": "zero",
          "a0": [[0.5]], "e0": [[1.0]], "c0": [[1.0]],
          "a1": [[-1.0]], "e1": [[0.5]], "c1": [[0.5]],
          "r": [[0.4]], "q_mat": [[0.3]]
        }"#;
        let m = PlantModel::from_json_str(text).unwrap();
        assert!((m.sigma_mp.eval_entry(0.25, 0, 0) - 0.15).abs() < 1e-15);
        assert_eq!(m.sigma_pm.eval_entry(0.7, 0, 0), 0.2);
        let doc = ModelDocument::from_model(&m);
        assert!(matches!(doc.sigma_mp, CouplingSpec::Sampled { .. }));
        assert_eq!(doc.sigma_pp, CouplingSpec::zero());
    }

    #[test]
    fn rejects_bad_keyword_and_shape() {
        let mut v = scalar_model(0.0, 0.0).to_json_value();
        v["sigma_pp"] = serde_json::json!("none");
        assert!(PlantModel::from_json_value(v.clone()).is_err());
        v["sigma_pp"] = serde_json::json!("zero");
        v["a0"] = serde_json::json!([[1.0, 2.0]]);
        assert!(PlantModel::from_json_value(v.clone()).is_err());
        v["a0"] = serde_json::json!([[1.0]]);
        v["lambda"] = serde_json::json!([-1.0]);
        match PlantModel::from_json_value(v) {
            Err(Error::InvalidModel(msgs)) => assert!(msgs[0].contains("positive")),
            other => panic!("{other:?}"),
        }
    }
}
