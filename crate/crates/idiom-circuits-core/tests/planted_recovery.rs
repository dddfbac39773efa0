// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end checks on the planted fixtures: the discovery loop must
//! recover exactly the ground-truth edge set at each fixture's documented
//! threshold (and across its documented threshold band), and the naive
//! oracle must agree with the engine on every single-edge effect.

use idiom_circuits_core::analysis::{antagonistic_components, detect_augmented_reception};
use idiom_circuits_core::discovery::{discover_circuit, single_edge_effects};
use idiom_circuits_core::experiment::{layerwise_similarity, select_l_from_curves};
use idiom_circuits_core::fixtures::{brute_force_edge_effects, build_planted_model, PlantedSpec};
use idiom_circuits_core::graph::NodeId;

#[test]
fn discovery_recovers_each_planted_set_at_documented_tau() {
    for spec in PlantedSpec::all() {
        let model = build_planted_model(&spec).unwrap();
        let circuit = discover_circuit(
            &model.weights,
            &model.vocab,
            &model.experiment,
            0,
            spec.tau,
        )
        .unwrap();
        let retained: std::collections::BTreeSet<_> = circuit.edges.keys().copied().collect();
        assert_eq!(
            retained, spec.planted_edges,
            "{:?}: retained set differs from planted set",
            spec.kind
        );
    }
}

#[test]
fn discovery_recovers_across_the_documented_tau_band() {
    for spec in PlantedSpec::all() {
        let model = build_planted_model(&spec).unwrap();
        let (lo, hi) = spec.tau_band;
        // Probe strictly inside the open band.
        for tau in [lo * 1.5, 0.5 * (lo + hi), hi / 1.5] {
            let circuit =
                discover_circuit(&model.weights, &model.vocab, &model.experiment, 0, tau).unwrap();
            let retained: std::collections::BTreeSet<_> = circuit.edges.keys().copied().collect();
            assert_eq!(retained, spec.planted_edges, "{:?} at tau={}", spec.kind, tau);
        }
    }
}

#[test]
fn suppressor_fixture_retains_negative_edges() {
    let spec = PlantedSpec::suppressor();
    let model = build_planted_model(&spec).unwrap();
    let circuit =
        discover_circuit(&model.weights, &model.vocab, &model.experiment, 0, spec.tau).unwrap();
    let antagonists = antagonistic_components(&circuit);
    assert_eq!(antagonists.len(), spec.suppressor_edges.len());
    for (edge, d) in antagonists {
        assert!(spec.suppressor_edges.contains(&edge));
        assert!(d < 0.0);
    }
}

#[test]
fn oracle_agrees_with_engine_on_every_edge() {
    for spec in PlantedSpec::all() {
        let model = build_planted_model(&spec).unwrap();
        let oracle =
            brute_force_edge_effects(&model.weights, &model.vocab, &model.experiment, 0).unwrap();
        let engine =
            single_edge_effects(&model.weights, &model.vocab, &model.experiment, 0).unwrap();
        assert_eq!(oracle.effects.len(), engine.len(), "{:?}", spec.kind);
        for (edge, d_oracle) in &oracle.effects {
            let d_engine = engine[edge];
            assert!(
                (d_oracle - d_engine).abs() <= 1e-6,
                "{:?}: {} oracle {} vs engine {}",
                spec.kind,
                edge,
                d_oracle,
                d_engine
            );
        }
    }
}

#[test]
fn augmented_reception_flags_the_block_one_head() {
    let spec = PlantedSpec::augmented_reception();
    let model = build_planted_model(&spec).unwrap();
    let circuit =
        discover_circuit(&model.weights, &model.vocab, &model.experiment, 0, spec.tau).unwrap();
    let corrupted_position = model.experiment.corruptions[0].position;
    let flagged = detect_augmented_reception(&circuit, corrupted_position).unwrap();
    assert_eq!(
        flagged,
        vec![NodeId::Head {
            layer: 1,
            head: 0,
            token: 1
        }]
    );
}

#[test]
fn step_margin_selects_the_designed_layer() {
    let spec = PlantedSpec::step_margin();
    let model = build_planted_model(&spec).unwrap();
    let curves = layerwise_similarity(&model.experiment, &model.weights, &model.vocab).unwrap();
    assert_eq!(select_l_from_curves(&curves, 0.02), 2);
    // Margin is a step: flat, then up at resid index 2, then flat.
    assert!(curves.margin[0].abs() < 1e-3);
    assert!(curves.margin[1].abs() < 1e-3);
    assert!(curves.margin[2] > 0.9);
    assert!((curves.margin[4] - curves.margin[2]).abs() < 1e-3);
}

#[test]
fn copy_head_attends_to_absolute_position_one() {
    let model = build_planted_model(&PlantedSpec::copy_head()).unwrap();
    let tokens = idiom_circuits_core::model::tokenize(&model.experiment.idiom, &model.vocab)
        .unwrap();
    let cache = idiom_circuits_core::forward(&model.weights, &tokens).unwrap();
    let pattern = &cache.layers[1].pattern[0];
    let final_token = tokens.len() - 1;
    assert!(
        pattern.at(final_token, 1) >= 0.99,
        "attention mass to position 1 was {}",
        pattern.at(final_token, 1)
    );
}
