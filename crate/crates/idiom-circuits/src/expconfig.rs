// SPDX-License-Identifier: MIT OR Apache-2.0

//! TOML experiment configs: the idiom string, the meaning string, the
//! corruption list with per-corruption thresholds, the metric layer `L`
//! (a residual-stream index, `1..=n_layers`) and the layer-selection
//! tolerance ε.
//!
//! ```toml
//! idiom = "He kicked the bucket"
//! meaning = "He died"
//! layer = 4
//! epsilon = 0.02
//!
//! [[corruptions]]
//! string = "He kicked the pail"
//! position = 3
//! tau = 0.006
//! ```

use std::path::Path;

use idiom_circuits_core::experiment::{CorruptionSpec, ExperimentSpec};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, FormatError};

/// Widens to the shortest decimal that round-trips the `f32`, so emitted
/// configs read `0.02` rather than `0.019999999552965164`.
pub(crate) fn shortest(v: f32) -> f64 {
    format!("{}", v).parse().unwrap()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptionFile {
    pub string: String,
    pub position: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub idiom: String,
    pub meaning: String,
    pub layer: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub corruptions: Vec<CorruptionFile>,
}

impl From<&ExperimentSpec> for ExperimentFile {
    fn from(spec: &ExperimentSpec) -> Self {
        ExperimentFile {
            idiom: spec.idiom.clone(),
            meaning: spec.meaning.clone(),
            layer: spec.layer,
            epsilon: shortest(spec.epsilon),
            corruptions: spec
                .corruptions
                .iter()
                .map(|c| CorruptionFile {
                    string: c.string.clone(),
                    position: c.position,
                    tau: shortest(c.tau),
                })
                .collect(),
        }
    }
}

impl From<&ExperimentFile> for ExperimentSpec {
    fn from(file: &ExperimentFile) -> Self {
        ExperimentSpec {
            idiom: file.idiom.clone(),
            meaning: file.meaning.clone(),
            layer: file.layer,
            epsilon: file.epsilon as f32,
            corruptions: file
                .corruptions
                .iter()
                .map(|c| CorruptionSpec {
                    string: c.string.clone(),
                    position: c.position,
                    tau: c.tau as f32,
                })
                .collect(),
        }
    }
}

pub fn experiment_from_str(text: &str) -> Result<ExperimentSpec, FormatError> {
    let file: ExperimentFile =
        toml::from_str(text).map_err(|e| FormatError::MalformedConfig(e.to_string()))?;
    Ok(ExperimentSpec::from(&file))
}

pub fn experiment_to_string(spec: &ExperimentSpec) -> String {
    toml::to_string_pretty(&ExperimentFile::from(spec))
        .expect("experiment serialization is infallible")
}

pub fn load_experiment(path: &Path) -> Result<ExperimentSpec, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    experiment_from_str(&text)
}

pub fn save_experiment(path: &Path, spec: &ExperimentSpec) -> Result<(), FormatError> {
    std::fs::write(path, experiment_to_string(spec)).map_err(|e| io_err(path, e))
}
