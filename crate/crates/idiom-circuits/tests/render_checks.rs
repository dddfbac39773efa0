// SPDX-License-Identifier: MIT OR Apache-2.0

//! Style rules of the DOT renderer, the SVG sweep chart, and the
//! fixed-width table formatters.

use std::collections::BTreeMap;

use idiom_circuits::chart::export_sweep_chart;
use idiom_circuits::circuit_io::SweepTable;
use idiom_circuits::render::{render_graph, RenderStyle};
use idiom_circuits::tables::{format_head_effect_table, format_qk_matrix};
use idiom_circuits_core::analysis::{head_effect_table, qk_dot_products, QkRequest};
use idiom_circuits_core::discovery::Circuit;
use idiom_circuits_core::fixtures::{build_planted_model, PlantedSpec};
use idiom_circuits_core::{EdgeId, ModelConfig, NormKind, PositionalKind};

fn toy_circuit(edges: Vec<(EdgeId, f32)>) -> Circuit {
    Circuit {
        config: ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_head: 4,
            d_mlp: 4,
            vocab_size: 8,
            max_seq: 8,
            norm_kind: NormKind::Rms,
            positional_kind: PositionalKind::None,
        },
        seq_len: 3,
        layer: 2,
        idiom: "A B C".into(),
        meaning: "M".into(),
        corruptions: Vec::new(),
        edges: edges.into_iter().collect::<BTreeMap<_, _>>(),
        achieved: Vec::new(),
    }
}

fn balanced(text: &str) -> bool {
    let mut depth = 0i32;
    for c in text.chars() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return false;
        }
    }
    depth == 0
}

#[test]
fn empty_circuit_renders_only_the_residual_chain() {
    let circuit = toy_circuit(Vec::new());
    let dot = render_graph(&circuit, &RenderStyle::default(), None);
    assert!(balanced(&dot));
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("shape=triangle"));
    assert!(dot.contains("shape=circle"));
    assert!(!dot.contains("shape=square"));
    assert!(dot.contains("color=gray"));
    assert!(!dot.contains("color=red"));
    assert!(!dot.contains("color=blue"));
}

#[test]
fn edge_colors_follow_the_sign_and_labels_merge() {
    let circuit = toy_circuit(vec![
        (EdgeId::k(0, 0, 0, 2), 0.05),
        (EdgeId::v(0, 0, 0, 2), 0.07),
        (EdgeId::v(0, 0, 1, 2), 0.04),
        (EdgeId::q(0, 0, 2), 0.03),
        (EdgeId::head_out(0, 0, 2), -0.02),
    ]);
    let dot = render_graph(&circuit, &RenderStyle::default(), None);
    assert!(balanced(&dot));
    // Both K and V retained between token 0 and the head: one KV edge.
    assert!(dot.contains("label=\"KV\""));
    // Only V from token 1.
    assert!(dot.contains("label=\"V\""));
    // The antagonistic HeadOut edge is blue and unlabeled.
    let blue_lines: Vec<&str> = dot.lines().filter(|l| l.contains("color=blue")).collect();
    assert_eq!(blue_lines.len(), 1);
    assert!(!blue_lines[0].contains("label"));
    // The Query edge is red and unlabeled.
    let q_line = dot
        .lines()
        .find(|l| l.contains("emb_t2 -> head_l0_h0_t2"))
        .unwrap();
    assert!(q_line.contains("color=red") && !q_line.contains("label"));
}

#[test]
fn thickness_is_linear_with_a_five_to_one_ratio() {
    let style = RenderStyle::default();
    assert!((style.penwidth(0.10) / style.penwidth(0.02) - 5.0).abs() < 1e-6);
    // Clamped at the documented bounds.
    assert_eq!(style.penwidth(10.0), style.max_penwidth);
    assert_eq!(style.penwidth(0.0), style.min_penwidth);
}

#[test]
fn token_labels_land_on_the_embedding_row() {
    let circuit = toy_circuit(Vec::new());
    let labels = vec!["A".to_string(), " B".to_string(), " C".to_string()];
    let dot = render_graph(&circuit, &RenderStyle::default(), Some(&labels));
    assert!(dot.contains("label=\"B\""));
    assert!(dot.contains("label=\"C\""));
}

#[test]
fn render_output_is_deterministic() {
    let model = build_planted_model(&PlantedSpec::suppressor()).unwrap();
    let circuit = idiom_circuits_core::discovery::discover_circuit(
        &model.weights,
        &model.vocab,
        &model.experiment,
        0,
        model.spec.tau,
    )
    .unwrap();
    let a = render_graph(&circuit, &RenderStyle::default(), None);
    let b = render_graph(&circuit, &RenderStyle::default(), None);
    assert_eq!(a, b);
    assert!(balanced(&a));
}

#[test]
fn sweep_chart_is_a_deterministic_dual_axis_svg() {
    let table = SweepTable {
        grid: vec![0.001, 0.002, 0.005, 0.02],
        edge_counts: vec![120, 40, 8, 0],
        cosines: vec![0.92, 0.88, 0.75, 0.1],
    };
    let a = export_sweep_chart(&table);
    let b = export_sweep_chart(&table);
    assert_eq!(a, b);
    assert!(a.starts_with("<svg"));
    assert!(a.trim_end().ends_with("</svg>"));
    // Two series with markers on each of the four points.
    assert_eq!(a.matches("<polyline").count(), 2);
    assert_eq!(a.matches("<circle").count(), 8);
    assert!(a.contains("log scale"));
}

#[test]
fn single_point_sweep_gets_one_marker_per_series() {
    let table = SweepTable {
        grid: vec![0.005],
        edge_counts: vec![7],
        cosines: vec![0.8],
    };
    let svg = export_sweep_chart(&table);
    assert_eq!(svg.matches("<polyline").count(), 0);
    assert_eq!(svg.matches("<circle").count(), 2);
}

#[test]
fn qk_matrix_formats_with_diagonal_auxiliaries() {
    let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
    let req = QkRequest {
        template: "{}{}".to_string(),
        fills: vec![("A".into(), " B".into()), ("X".into(), " F".into())],
        head: (0, 0),
        slot1_corruptions: vec![vec!["X".into()], vec!["A".into()]],
        slot2_corruptions: vec![vec![" F".into()], vec![" B".into()]],
        rows_bear_query: true,
    };
    let matrix = qk_dot_products(&model.weights, &model.vocab, &req).unwrap();
    let text = format_qk_matrix(&matrix);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, vec!["A", "X"]);
    // Diagonal cell with its (corrupted-query, corrupted-key) pair.
    assert!(text.contains("50 (0, 0)"));
}

#[test]
fn head_effect_formatting_rounds_and_marks_asterisks() {
    let circuit = toy_circuit(vec![
        (EdgeId::head_out(0, 0, 2), 0.137),
        (EdgeId::head_out(1, 1, 2), -0.024),
        (EdgeId::q(1, 1, 2), 0.02),
    ]);
    let table = head_effect_table(&[circuit], 0.01);
    let text = format_head_effect_table(&table);
    assert!(text.contains("Layer 0") && text.contains("Layer 1"));
    let row = text.lines().last().unwrap();
    // 0.137 rounds to 14, asterisked; -0.024 rounds to -2 with a Q edge.
    assert!(row.contains("14*"));
    assert!(row.contains("-2"));
}
