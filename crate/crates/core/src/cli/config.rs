//! Scenario files (schema `hyperstab-scenario-v1`).
//!
//! ```json
//! {
//!   "model": "models/demo_model.json",
//!   "grid": 201,
//!   "sim": { "t_end": 10.0, "seed": 1 },
//!   "synthesis": { "epsilon": 0.1, "observer_margin": 5.0 },
//!   "outputs": "out/demo"
//! }
//! ```
//!
//! `model` is either an inline model document or a path relative to the scenario file, as is
//! `outputs` (default `out/<scenario stem>`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelDocument, PlantModel};
use crate::numerics::DEFAULT_MARGIN;
use crate::sim::SimConfig;
use crate::synthesis::SynthesisOptions;

pub const SCENARIO_SCHEMA: &str = "hyperstab-scenario-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(Box<ModelDocument>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Default decay margin of both designs.
    #[serde(default = "default_margin")]
    pub epsilon: f64,
    #[serde(default)]
    pub observer_margin: Option<f64>,
    #[serde(default)]
    pub control_margin: Option<f64>,
    /// Base cutoff `ω₀` of the filter sweep.
    #[serde(default = "one")]
    pub filter_omega0: f64,
    #[serde(default = "default_doublings")]
    pub filter_doublings: u32,
    /// Phase grid per free phase in the Assumption 1 search.
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

fn one() -> f64 {
    1.0
}

fn default_doublings() -> u32 {
    10
}

fn default_theta_points() -> usize {
    64
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_MARGIN,
            observer_margin: None,
            control_margin: None,
            filter_omega0: 1.0,
            filter_doublings: default_doublings(),
            theta_points: default_theta_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub schema: Option<String>,
    pub model: ModelSource,
    pub grid: usize,
    pub sim: SimConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

/// A loaded and checked scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: ScenarioConfig,
    pub model: PlantModel,
    pub outputs: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read scenario {}: {e}", path.display())))?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Invalid(format!("scenario {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::from_config(config, base, &name)
    }

    /// Resolves relative paths against `base`.
    pub fn from_config(config: ScenarioConfig, base: &Path, name: &str) -> Result<Self> {
        if let Some(s) = &config.schema {
            if s != SCENARIO_SCHEMA {
                return Err(Error::Invalid(format!("unknown scenario schema {s:?}")));
            }
        }
        let model = match &config.model {
            ModelSource::Path(p) => {
                let full = base.join(p);
                if !full.exists() {
                    return Err(Error::Invalid(format!("model file {} does not exist", full.display())));
                }
                PlantModel::load(&full)?
            }
            ModelSource::Inline(d) => d.to_model()?,
        };
        let outputs = match &config.outputs {
            Some(p) => base.join(p),
            None => base.join("out").join(name),
        };
        let s = Self {
            name: name.into(),
            config,
            model,
            outputs,
        };
        s.precheck()?;
        Ok(s)
    }

    pub(crate) fn precheck(&self) -> Result<()> {
        let c = &self.config;
        if c.grid < 5 {
            return Err(Error::Invalid(format!("grid must have at least 5 nodes, got {}", c.grid)));
        }
        if !(c.sim.t_end.is_finite() && c.sim.t_end > 0.0) {
            return Err(Error::Invalid("sim.t_end must be positive".into()));
        }
        if let Some(dt) = c.sim.dt {
            let cfl = self.h() / self.model.max_speed();
            if !(dt > 0.0 && dt <= cfl * (1.0 + 1e-12)) {
                return Err(Error::Invalid(format!(
                    "sim.dt = {dt} violates the CFL bound h/max speed = {cfl}"
                )));
            }
        }
        if c.sim.stations.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Invalid("sim.stations must lie in [0, 1]".into()));
        }
        let s = &c.synthesis;
        let margins = [Some(s.epsilon), s.observer_margin, s.control_margin];
        if margins.iter().flatten().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Invalid("margins must be finite and non-negative".into()));
        }
        if !(s.filter_omega0.is_finite() && s.filter_omega0 > 0.0) {
            return Err(Error::Invalid("synthesis.filter_omega0 must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.config.grid - 1) as f64
    }

    pub fn options(&self) -> SynthesisOptions {
        let s = &self.config.synthesis;
        SynthesisOptions {
            n_grid: self.config.grid,
            observer_margin: s.observer_margin.unwrap_or(s.epsilon),
            control_margin: s.control_margin.unwrap_or(s.epsilon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_model;

    fn config(extra: &str) -> String {
        let doc = scalar_model(0.2, 0.1).to_json_string();
        format!(r#"{{"model": {doc}, "grid": 41, "sim": {{"t_end": 2.0 {extra}}}}}"#)
    }

    #[test]
    fn inline_model_with_defaults() {
        let c: ScenarioConfig = serde_json::from_str(&config("")).unwrap();
        let s = Scenario::from_config(c, Path::new("/tmp/x"), "inline").unwrap();
        assert_eq!(s.options(), SynthesisOptions::new(41));
        assert_eq!(s.outputs, Path::new("/tmp/x/out/inline"));
        assert_eq!(s.config.synthesis.theta_points, 64);
    }

    #[test]
    fn cfl_precheck() {
        let c: ScenarioConfig = serde_json::from_str(&config(r#", "dt": 0.5"#)).unwrap();
        assert!(Scenario::from_config(c, Path::new("."), "x").is_err());
        let c: ScenarioConfig = serde_json::from_str(&config(r#", "dt": 0.01"#)).unwrap();
        assert!(Scenario::from_config(c, Path::new("."), "x").is_ok());
    }

    #[test]
    fn unknown_fields_and_missing_files_are_rejected() {
        assert!(serde_json::from_str::<ScenarioConfig>(&config(r#", "bogus": 1"#)).is_err());
        let c: ScenarioConfig =
            serde_json::from_str(r#"{"model": "nowhere.json", "grid": 41, "sim": {"t_end": 1.0}}"#).unwrap();
        assert!(Scenario::from_config(c, Path::new("/nonexistent"), "x").is_err());
    }
}
