#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hyperstab::cli::Scenario;
use hyperstab::kernels::{KernelBundle, TriGrid};
use hyperstab::model::PlantModel;
use hyperstab::synthesis::{synthesize_from, FullSynthesis, SynthesisOptions};

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenarios_dir().join(name)).unwrap()
}

/// Kernel cache shared by the test binaries.
pub fn cache() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("kernel-cache")
}

pub fn synthesis(model: &PlantModel, options: SynthesisOptions) -> FullSynthesis {
    let bundle = KernelBundle::solve_cached(model, TriGrid::new(options.n_grid).unwrap(), Some(&cache())).unwrap();
    synthesize_from(model, options, bundle).unwrap()
}

pub fn scenario_synthesis(scn: &Scenario) -> FullSynthesis {
    synthesis(&scn.model, scn.options())
}

/// Scalar plant from JSON fragments overriding the defaults below.
pub fn scalar(overrides: serde_json::Value) -> PlantModel {
    let mut doc = serde_json::json!({
        "schema": "hyperstab-model-v1",
        "n": 1, "m": 1, "p": 1, "q": 1,
        "lambda": [1.0], "mu": [1.5],
        "sigma_pp": "zero", "sigma_pm": "zero", "sigma_mp": "zero", "sigma_mm": "zero",
        "a0": [[0.5]], "e0": [[1.0]], "c0": [[1.0]],
        "a1": [[-1.0]], "e1": [[0.5]], "c1": [[0.5]],
        "r": [[0.4]], "q_mat": [[0.3]]
    });
    for (k, v) in overrides.as_object().unwrap() {
        doc[k] = v.clone();
    }
    PlantModel::from_json_value(doc).unwrap()
}
