// SPDX-License-Identifier: MIT OR Apache-2.0

//! Regenerates the shipped planted-model fixtures: for each fixture recipe
//! this writes a tensor container, a vocabulary file and a TOML experiment
//! config into a per-fixture directory. The minimal one-layer fixture gets
//! a second corruption so the full discover → merge → prune pipeline can be
//! exercised from files alone.
//!
//! Usage: `gen-fixtures [out-dir]` (default `testdata`).

use std::path::PathBuf;

use idiom_circuits::container::save_model;
use idiom_circuits::expconfig::save_experiment;
use idiom_circuits::vocabfile::save_vocab;
use idiom_circuits_core::experiment::CorruptionSpec;
use idiom_circuits_core::fixtures::{build_planted_model, PlantedKind, PlantedSpec};

fn dir_name(kind: PlantedKind) -> &'static str {
    match kind {
        PlantedKind::MinimalOneLayer => "minimal_one_layer",
        PlantedKind::Suppressor => "suppressor",
        PlantedKind::AugmentedReception => "augmented_reception",
        PlantedKind::DiagonalAttention => "diagonal_attention",
        PlantedKind::StepMargin => "step_margin",
        PlantedKind::CopyHead => "copy_head",
    }
}

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("testdata"));
    for spec in PlantedSpec::all() {
        let model = build_planted_model(&spec).expect("shipped fixtures are feasible");
        let dir = out_dir.join(dir_name(spec.kind));
        std::fs::create_dir_all(&dir).expect("create fixture directory");
        save_model(&dir.join("model.bin"), &model.weights).expect("write container");
        save_vocab(&dir.join("vocab.tsv"), &model.vocab).expect("write vocab");
        let mut experiment = model.experiment.clone();
        if spec.kind == PlantedKind::MinimalOneLayer {
            // A second, equivalent corruption (E is orthogonal to A just
            // like X) for multi-corruption pipeline runs.
            experiment.corruptions.push(CorruptionSpec {
                string: "E B".into(),
                position: 0,
                tau: experiment.corruptions[0].tau,
            });
        }
        save_experiment(&dir.join("experiment.toml"), &experiment).expect("write experiment");
        println!("wrote {}", dir.display());
    }
}
