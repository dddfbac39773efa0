// SPDX-License-Identifier: MIT OR Apache-2.0

//! Container/vocab/config/circuit serialization round trips and the
//! distinct failure modes of the container loader.

use idiom_circuits::circuit_io::{
    circuit_from_str, circuit_to_string, sweep_from_csv, sweep_to_csv, SweepTable,
};
use idiom_circuits::container::{load_model, model_from_bytes, model_to_bytes, save_model};
use idiom_circuits::error::FormatError;
use idiom_circuits::expconfig::{experiment_from_str, experiment_to_string};
use idiom_circuits::vocabfile::{vocab_from_str, vocab_to_string};
use idiom_circuits_core::discovery::discover_circuit;
use idiom_circuits_core::fixtures::{build_planted_model, PlantedSpec};
use idiom_circuits_core::CoreError;

#[test]
fn container_round_trip_is_bit_exact() {
    for spec in PlantedSpec::all() {
        let model = build_planted_model(&spec).unwrap();
        let bytes = model_to_bytes(&model.weights);
        let loaded = model_from_bytes(&bytes).unwrap();
        assert_eq!(loaded, model.weights, "{:?}", spec.kind);
        // Re-serialization is byte-identical.
        assert_eq!(model_to_bytes(&loaded), bytes, "{:?}", spec.kind);
    }
}

#[test]
fn container_file_io_round_trips() {
    let model = build_planted_model(&PlantedSpec::copy_head()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&path, &model.weights).unwrap();
    assert_eq!(load_model(&path).unwrap(), model.weights);
}

#[test]
fn malformed_headers_are_rejected_distinctly() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let good = model_to_bytes(&model.weights);

    // Too short for the length prefix.
    assert!(matches!(
        model_from_bytes(&good[..4]),
        Err(FormatError::MalformedHeader(_))
    ));
    // Length prefix pointing past the end.
    let mut bad = good.clone();
    bad[..8].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(
        model_from_bytes(&bad),
        Err(FormatError::MalformedHeader(_))
    ));
    // Header bytes that are not JSON.
    let mut bad = good.clone();
    bad[8] = b'!';
    assert!(matches!(
        model_from_bytes(&bad),
        Err(FormatError::MalformedHeader(_))
    ));
}

#[test]
fn missing_tensor_and_shape_mismatch_are_distinct_errors() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let good = model_to_bytes(&model.weights);
    let header_len = u64::from_le_bytes(good[..8].try_into().unwrap()) as usize;
    let header = std::str::from_utf8(&good[8..8 + header_len]).unwrap();

    // Drop a tensor from the inventory.
    let missing = header.replace("blocks.0.attn.W_O", "blocks.0.attn.W_X");
    let mut bytes = (missing.len() as u64).to_le_bytes().to_vec();
    bytes.extend_from_slice(missing.as_bytes());
    bytes.extend_from_slice(&good[8 + header_len..]);
    assert!(matches!(
        model_from_bytes(&bytes),
        Err(FormatError::MissingTensor(name)) if name == "blocks.0.attn.W_O"
    ));

    // Declare a wrong shape for the token embedding ([8, 12] on disk).
    let wrong = header.replace("\"shape\":[8,12]", "\"shape\":[12,8]");
    assert_ne!(wrong, header);
    let mut bytes = (wrong.len() as u64).to_le_bytes().to_vec();
    bytes.extend_from_slice(wrong.as_bytes());
    bytes.extend_from_slice(&good[8 + header_len..]);
    assert!(matches!(
        model_from_bytes(&bytes),
        Err(FormatError::TensorShape { name, .. }) if name == "token_embedding"
    ));
}

#[test]
fn non_finite_values_are_a_distinct_error() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let good = model_to_bytes(&model.weights);
    let header_len = u64::from_le_bytes(good[..8].try_into().unwrap()) as usize;
    let mut bad = good.clone();
    // Overwrite the first data float with a NaN.
    bad[8 + header_len..8 + header_len + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(
        model_from_bytes(&bad),
        Err(FormatError::Core(CoreError::NonFinite(_)))
    ));
}

#[test]
fn vocab_file_round_trips_and_rejects_bad_lines() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let text = vocab_to_string(&model.vocab);
    let parsed = vocab_from_str(&text).unwrap();
    assert_eq!(vocab_to_string(&parsed), text);
    // Tokens keep their leading spaces.
    assert!(text.contains("1\t B\n"));

    assert!(matches!(
        vocab_from_str("0 A\n"),
        Err(FormatError::MalformedVocab { line: 1, .. })
    ));
    assert!(matches!(
        vocab_from_str("0\tA\nx\tB\n"),
        Err(FormatError::MalformedVocab { line: 2, .. })
    ));
    // Duplicate ids surface the engine's vocabulary error.
    assert!(vocab_from_str("0\tA\n0\tB\n").is_err());
}

#[test]
fn experiment_config_round_trips() {
    let model = build_planted_model(&PlantedSpec::suppressor()).unwrap();
    let text = experiment_to_string(&model.experiment);
    let parsed = experiment_from_str(&text).unwrap();
    assert_eq!(parsed, model.experiment);
    assert!(matches!(
        experiment_from_str("idiom = 3"),
        Err(FormatError::MalformedConfig(_))
    ));
}

#[test]
fn circuit_json_round_trips() {
    let model = build_planted_model(&PlantedSpec::augmented_reception()).unwrap();
    let circuit = discover_circuit(
        &model.weights,
        &model.vocab,
        &model.experiment,
        0,
        model.spec.tau,
    )
    .unwrap();
    let text = circuit_to_string(&circuit);
    let parsed = circuit_from_str(&text).unwrap();
    assert_eq!(parsed, circuit);
    assert_eq!(circuit_to_string(&parsed), text);
}

#[test]
fn sweep_csv_round_trips_and_rejects_bad_rows() {
    let table = SweepTable {
        grid: vec![0.001, 0.005, 0.02],
        edge_counts: vec![12, 4, 0],
        cosines: vec![0.91, 0.85, 0.0],
    };
    let text = sweep_to_csv(&table);
    assert_eq!(sweep_from_csv(&text).unwrap(), table);
    assert!(matches!(
        sweep_from_csv("nope\n"),
        Err(FormatError::MalformedSweep { line: 1, .. })
    ));
    assert!(matches!(
        sweep_from_csv("tau,edge_count,cosine\n0.1,x,0.5\n"),
        Err(FormatError::MalformedSweep { line: 2, .. })
    ));
}
