// SPDX-License-Identifier: MIT OR Apache-2.0

//! QK dot-product matrices checked against hand-recomputed projections.

use idiom_circuits_core::analysis::{qk_dot_products, QkRequest};
use idiom_circuits_core::fixtures::{build_planted_model, PlantedSpec};
use idiom_circuits_core::math::{rms_norm, Mat};
use idiom_circuits_core::model::tokenize;

fn request(fills: Vec<(String, String)>) -> QkRequest {
    QkRequest {
        template: "{}{}".to_string(),
        fills,
        head: (0, 0),
        slot1_corruptions: vec![],
        slot2_corruptions: vec![],
        rows_bear_query: true,
    }
}

/// Recomputes one q·k dot from the weights alone: embed, normalize,
/// project, multiply.
fn manual_qk(weights: &idiom_circuits_core::Weights, q_token: usize, k_token: usize) -> f32 {
    let c = &weights.config;
    let unit = vec![1.0f32; c.d_model];
    let project = |token: usize, m: &Mat| -> Vec<f32> {
        let normed = rms_norm(weights.token_embedding.row(token), &unit);
        let mut out = vec![0.0f32; c.d_head];
        for (j, o) in out.iter_mut().enumerate() {
            for (i, &x) in normed.iter().enumerate() {
                *o += x * m.at(i, j);
            }
        }
        out
    };
    let q = project(q_token, &weights.blocks[0].attn.w_q[0]);
    let k = project(k_token, &weights.blocks[0].attn.w_k[0]);
    q.iter().zip(&k).map(|(a, b)| a * b).sum()
}

#[test]
fn cells_match_hand_recomputed_dot_products() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let req = request(vec![
        ("A".into(), " B".into()),
        ("X".into(), " F".into()),
    ]);
    let matrix = qk_dot_products(&model.weights, &model.vocab, &req).unwrap();
    let id = |s: &str| tokenize(s, &model.vocab).unwrap().ids[0];
    let expect = [
        [manual_qk(&model.weights, id(" B"), id("A")), manual_qk(&model.weights, id(" B"), id("X"))],
        [manual_qk(&model.weights, id(" F"), id("A")), manual_qk(&model.weights, id(" F"), id("X"))],
    ];
    for r in 0..2 {
        for c in 0..2 {
            assert!(
                (matrix.cells[r][c] - expect[r][c]).abs() <= 1e-5,
                "cell ({}, {}): {} vs {}",
                r,
                c,
                matrix.cells[r][c],
                expect[r][c]
            );
        }
    }
    // The planted head aligns the " B" query with the "A" key and nothing
    // else; every other cell is zero by orthogonality.
    assert!(matrix.cells[0][0] > 10.0);
    assert!(matrix.cells[0][1].abs() <= 1e-5);
    assert!(matrix.cells[1][0].abs() <= 1e-5);
    assert!(matrix.cells[1][1].abs() <= 1e-5);
    assert_eq!(matrix.row_labels, vec!["B", "F"]);
    assert_eq!(matrix.col_labels, vec!["A", "X"]);
}

#[test]
fn diagonal_auxiliaries_average_corrupted_runs() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let mut req = request(vec![("A".into(), " B".into())]);
    req.slot1_corruptions = vec![vec!["X".into()]];
    req.slot2_corruptions = vec![vec![" F".into()]];
    let matrix = qk_dot_products(&model.weights, &model.vocab, &req).unwrap();
    let (corrupted_query, corrupted_key) = matrix.diag_aux[0];
    // Both corruptions break the alignment completely.
    assert!(corrupted_query.unwrap().abs() <= 1e-5);
    assert!(corrupted_key.unwrap().abs() <= 1e-5);

    let plain = request(vec![("A".into(), " B".into())]);
    let matrix = qk_dot_products(&model.weights, &model.vocab, &plain).unwrap();
    assert_eq!(matrix.diag_aux[0], (None, None));
}

#[test]
fn transposed_orientation_swaps_labels_and_cells() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let mut req = request(vec![
        ("A".into(), " B".into()),
        ("X".into(), " F".into()),
    ]);
    let by_query = qk_dot_products(&model.weights, &model.vocab, &req).unwrap();
    req.rows_bear_query = false;
    let by_key = qk_dot_products(&model.weights, &model.vocab, &req).unwrap();
    assert_eq!(by_key.row_labels, by_query.col_labels);
    assert_eq!(by_key.col_labels, by_query.row_labels);
    for r in 0..2 {
        for c in 0..2 {
            assert_eq!(by_key.cells[r][c], by_query.cells[c][r]);
        }
    }
}

#[test]
fn slot_and_template_errors_are_reported() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let mut req = request(vec![("A".into(), " B".into())]);
    req.template = "{} only one slot".into();
    assert!(qk_dot_products(&model.weights, &model.vocab, &req).is_err());

    let mut req = request(vec![("A".into(), " B".into())]);
    req.head = (5, 0);
    assert!(qk_dot_products(&model.weights, &model.vocab, &req).is_err());

    // A fill that cannot tokenize.
    let req = request(vec![("QQ".into(), " B".into())]);
    assert!(qk_dot_products(&model.weights, &model.vocab, &req).is_err());
}
