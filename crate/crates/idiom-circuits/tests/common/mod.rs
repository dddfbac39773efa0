// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded random toy models and circuits shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use idiom_circuits_core::discovery::{Circuit, CorruptionRecord};
use idiom_circuits_core::graph::{build_graph, CircuitGraph, EdgeId, PatchSet};
use idiom_circuits_core::math::Mat;
use idiom_circuits_core::model::{
    AttnWeights, BlockWeights, MlpWeights, ModelConfig, NormKind, PositionalKind, TokenSequence,
    Weights,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Mat {
    let data: Vec<f32> = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    Mat::from_vec(rows, cols, data).unwrap()
}

/// Small random model: ≤ 4 layers, ≤ 4 heads, random norm and positional
/// flavors.
pub fn random_model(rng: &mut ChaCha8Rng) -> Weights {
    let norm_kind = if rng.gen_bool(0.5) {
        NormKind::Rms
    } else {
        NormKind::Layer
    };
    let positional_kind = match rng.gen_range(0..3) {
        0 => PositionalKind::Learned,
        1 => PositionalKind::Rotary,
        _ => PositionalKind::None,
    };
    let config = ModelConfig {
        n_layers: rng.gen_range(1..=4),
        n_heads: rng.gen_range(1..=4),
        d_model: rng.gen_range(4..=12),
        d_head: 2 * rng.gen_range(1..=3),
        d_mlp: rng.gen_range(2..=8),
        vocab_size: rng.gen_range(4..=10),
        max_seq: 8,
        norm_kind,
        positional_kind,
    };
    let c = &config;
    let token_embedding = random_mat(rng, c.vocab_size, c.d_model, 1.0);
    let pos_embedding = if positional_kind == PositionalKind::Learned {
        Some(random_mat(rng, c.max_seq, c.d_model, 0.5))
    } else {
        None
    };
    let blocks = (0..c.n_layers)
        .map(|_| BlockWeights {
            norm1_scale: (0..c.d_model).map(|_| rng.gen_range(0.5..1.5)).collect(),
            attn: AttnWeights {
                w_q: (0..c.n_heads)
                    .map(|_| random_mat(rng, c.d_model, c.d_head, 0.7))
                    .collect(),
                w_k: (0..c.n_heads)
                    .map(|_| random_mat(rng, c.d_model, c.d_head, 0.7))
                    .collect(),
                w_v: (0..c.n_heads)
                    .map(|_| random_mat(rng, c.d_model, c.d_head, 0.7))
                    .collect(),
                w_o: (0..c.n_heads)
                    .map(|_| random_mat(rng, c.d_head, c.d_model, 0.7))
                    .collect(),
            },
            norm2_scale: (0..c.d_model).map(|_| rng.gen_range(0.5..1.5)).collect(),
            mlp: MlpWeights {
                w_in: random_mat(rng, c.d_model, c.d_mlp, 0.7),
                b_in: (0..c.d_mlp).map(|_| rng.gen_range(-0.2..0.2)).collect(),
                w_out: random_mat(rng, c.d_mlp, c.d_model, 0.7),
                b_out: (0..c.d_model).map(|_| rng.gen_range(-0.2..0.2)).collect(),
            },
        })
        .collect();
    let unembedding = random_mat(rng, c.d_model, c.vocab_size, 1.0);
    let weights = Weights {
        config,
        token_embedding,
        pos_embedding,
        blocks,
        unembedding,
    };
    weights.validate().unwrap();
    weights
}

/// Random token sequence of the given length; spans are synthetic.
pub fn random_tokens(rng: &mut ChaCha8Rng, vocab_size: usize, len: usize) -> TokenSequence {
    let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..vocab_size)).collect();
    let text_spans = ids.iter().map(|id| format!("t{}", id)).collect();
    TokenSequence { ids, text_spans }
}

/// Random subset of the graph's edge universe.
pub fn random_patch_set(rng: &mut ChaCha8Rng, graph: &CircuitGraph, p: f64) -> PatchSet {
    graph
        .edges()
        .into_iter()
        .filter(|_| rng.gen_bool(p))
        .collect()
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_head: 4,
        d_mlp: 4,
        vocab_size: 8,
        max_seq: 8,
        norm_kind: NormKind::Rms,
        positional_kind: PositionalKind::None,
    }
}

/// Random edge subset over the toy config's universe, packaged as a circuit.
pub fn random_circuit(rng: &mut ChaCha8Rng) -> Circuit {
    let config = toy_config();
    let graph = build_graph(&config, 3, 1).unwrap();
    let mut edges: BTreeMap<EdgeId, f32> = BTreeMap::new();
    for e in graph.edges() {
        if rng.gen_bool(0.4) {
            edges.insert(e, rng.gen_range(-0.5..0.5f32));
        }
    }
    Circuit {
        config,
        seq_len: 3,
        layer: 2,
        idiom: "A B".into(),
        meaning: "M".into(),
        corruptions: vec![CorruptionRecord {
            string: "X B".into(),
            position: 0,
            tau: rng.gen_range(0.001..0.01),
        }],
        edges,
        achieved: Vec::new(),
    }
}
