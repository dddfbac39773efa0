// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-constructed planted-circuit models and a brute-force edge oracle.
//!
//! Each fixture is a tiny transformer whose weights are written by hand so
//! that the causally necessary edges for the experiment are known exactly.
//! Every token embedding is a 1-sparse direction scaled by 2, so a
//! normalized residual contributes a component of `2 / rms` along each
//! active direction; attention scores and head writes are then set by
//! closed-form gains. The oracle recomputes single-edge effects with an
//! independently written naive forward pass over plain `Vec<Vec<f32>>`
//! buffers, providing a second implementation of the patch semantics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::{expf, sqrtf};

use crate::error::CoreError;
use crate::experiment::{CorruptionSpec, ExperimentSpec};
use crate::graph::{build_graph, EdgeId, EdgeType, PatchSet};
use crate::math::Mat;
use crate::model::{
    tokenize, AttnWeights, BlockWeights, MlpWeights, ModelConfig, NormKind, PositionalKind, Vocab,
    Weights,
};

/// Safety guard on exhaustive per-edge evaluation.
pub const ORACLE_EDGE_GUARD: usize = 5000;

/// Token direction assignments shared by all fixtures: token id `i` embeds
/// as `2·e_i`; direction 8 is a free "feature" channel (and, in the learned
/// positional fixture, directions 8..12 hold position encodings).
const EMBED_SCALE: f32 = 2.0;
const MEANING_DIR: usize = 3;
const FEATURE_DIR: usize = 8;

/// `2·e_i` normalized (RMS, unit scale) has this component along `e_i`.
fn one_sparse_comp(d_model: usize) -> f32 {
    sqrtf(d_model as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedKind {
    /// One layer, one head moving the first token's identity into the final
    /// token and writing the meaning direction.
    MinimalOneLayer,
    /// Two heads on the same connection; the second writes the negative
    /// meaning direction (an antagonist).
    Suppressor,
    /// A layer-0 head writes a feature into the final token's stream that a
    /// layer-1 head's query reads: the layer-1 Query edge carries the
    /// corruption's causal trace.
    AugmentedReception,
    /// Hard diagonal attention; exercises the rule that a patched Query
    /// never perturbs the same-token attention score.
    DiagonalAttention,
    /// The meaning write happens in block 1 of four; the similarity margin
    /// steps up at resid index 2 and stays flat after.
    StepMargin,
    /// Learned positional encodings; a block-1 head attends to absolute
    /// position 1 from every later token.
    CopyHead,
}

/// A fixture recipe: architecture, ground-truth edges, and the threshold
/// band within which discovery recovers exactly the planted set.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub config: ModelConfig,
    pub kind: PlantedKind,
    /// Ground-truth causal edges for the fixture's experiment.
    pub planted_edges: PatchSet,
    /// Subset of `planted_edges` with negative effect.
    pub suppressor_edges: PatchSet,
    /// Block index whose head performs the meaning write.
    pub write_layer: usize,
    /// Documented discovery threshold.
    pub tau: f32,
    /// Open interval of thresholds recovering exactly the planted set.
    pub tau_band: (f32, f32),
    pub notes: String,
}

/// A buildable fixture: weights, vocabulary and its experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub spec: PlantedSpec,
    pub weights: Weights,
    pub vocab: Vocab,
    pub experiment: ExperimentSpec,
}

fn base_config(n_layers: usize, n_heads: usize, positional: PositionalKind) -> ModelConfig {
    ModelConfig {
        n_layers,
        n_heads,
        d_model: 12,
        d_head: 4,
        d_mlp: 4,
        vocab_size: 8,
        max_seq: if positional == PositionalKind::Learned {
            4
        } else {
            8
        },
        norm_kind: NormKind::Rms,
        positional_kind: positional,
    }
}

impl PlantedSpec {
    pub fn minimal_one_layer() -> Self {
        let config = base_config(1, 1, PositionalKind::None);
        PlantedSpec {
            config,
            kind: PlantedKind::MinimalOneLayer,
            planted_edges: [
                EdgeId::k(0, 0, 0, 1),
                EdgeId::v(0, 0, 0, 1),
                EdgeId::head_out(0, 0, 1),
            ]
            .into_iter()
            .collect(),
            suppressor_edges: PatchSet::new(),
            write_layer: 0,
            tau: 0.05,
            tau_band: (0.001, 0.1),
            notes: String::from(
                "single head reads the first token via hard attention from the final token \
                 and writes the meaning direction; the corruption breaks the QK alignment",
            ),
        }
    }

    pub fn suppressor() -> Self {
        let config = base_config(1, 2, PositionalKind::None);
        let mut planted = PatchSet::new();
        let mut suppressors = PatchSet::new();
        for h in 0..2 {
            planted.insert(EdgeId::k(0, h, 0, 1));
            planted.insert(EdgeId::v(0, h, 0, 1));
            planted.insert(EdgeId::head_out(0, h, 1));
        }
        for e in [
            EdgeId::k(0, 1, 0, 1),
            EdgeId::v(0, 1, 0, 1),
            EdgeId::head_out(0, 1, 1),
        ] {
            suppressors.insert(e);
        }
        PlantedSpec {
            config,
            kind: PlantedKind::Suppressor,
            planted_edges: planted,
            suppressor_edges: suppressors,
            write_layer: 0,
            tau: 0.005,
            tau_band: (0.001, 0.01),
            notes: String::from(
                "head 0 writes +8 and head 1 writes -2 along the meaning direction over the \
                 same token pair; head 1's edges are retained with negative effect",
            ),
        }
    }

    pub fn augmented_reception() -> Self {
        let config = base_config(2, 1, PositionalKind::None);
        PlantedSpec {
            config,
            kind: PlantedKind::AugmentedReception,
            planted_edges: [
                EdgeId::v(0, 0, 0, 1),
                EdgeId::head_out(0, 0, 1),
                EdgeId::q(1, 0, 1),
                EdgeId::k(1, 0, 0, 1),
                EdgeId::v(1, 0, 0, 1),
                EdgeId::head_out(1, 0, 1),
            ]
            .into_iter()
            .collect(),
            suppressor_edges: PatchSet::new(),
            write_layer: 1,
            tau: 0.01,
            tau_band: (0.005, 0.05),
            notes: String::from(
                "block 0 writes a small feature into the final token that block 1's query \
                 reads with high gain (saturated attention), so the block-1 head has a \
                 retained Query edge tracing back to the earlier corrupted token; block 0's \
                 Key edge is deliberately sub-threshold because its attention is saturated",
            ),
        }
    }

    pub fn diagonal_attention() -> Self {
        let config = base_config(1, 1, PositionalKind::None);
        PlantedSpec {
            config,
            kind: PlantedKind::DiagonalAttention,
            planted_edges: [EdgeId::head_out(0, 0, 2)].into_iter().collect(),
            suppressor_edges: PatchSet::new(),
            write_layer: 0,
            tau: 0.05,
            tau_band: (0.001, 0.9),
            notes: String::from(
                "every token attends only to itself via orthogonal per-token query/key \
                 directions; corrupting the final token leaves all cross-token scores at \
                 zero, so a patched Query edge changes nothing",
            ),
        }
    }

    pub fn step_margin() -> Self {
        let config = base_config(4, 1, PositionalKind::None);
        PlantedSpec {
            config,
            kind: PlantedKind::StepMargin,
            planted_edges: [
                EdgeId::k(1, 0, 0, 1),
                EdgeId::v(1, 0, 0, 1),
                EdgeId::head_out(1, 0, 1),
            ]
            .into_iter()
            .collect(),
            suppressor_edges: PatchSet::new(),
            write_layer: 1,
            tau: 0.05,
            tau_band: (0.001, 0.1),
            notes: String::from(
                "blocks 0, 2 and 3 are inert; the meaning write lands in block 1, so the \
                 similarity margin over the corruption steps up at resid index 2 and is \
                 flat everywhere else",
            ),
        }
    }

    pub fn copy_head() -> Self {
        let config = base_config(2, 1, PositionalKind::Learned);
        PlantedSpec {
            config,
            kind: PlantedKind::CopyHead,
            planted_edges: [EdgeId::v(1, 0, 1, 2), EdgeId::head_out(1, 0, 2)]
                .into_iter()
                .collect(),
            suppressor_edges: PatchSet::new(),
            write_layer: 1,
            tau: 0.05,
            tau_band: (0.001, 0.5),
            notes: String::from(
                "learned position encodings occupy directions 8..12; the block-1 head's \
                 query reads any position direction and its key reads only position 1, so \
                 every later token attends to absolute position 1 with mass > 0.99",
            ),
        }
    }

    pub fn all() -> Vec<PlantedSpec> {
        vec![
            PlantedSpec::minimal_one_layer(),
            PlantedSpec::suppressor(),
            PlantedSpec::augmented_reception(),
            PlantedSpec::diagonal_attention(),
            PlantedSpec::step_margin(),
            PlantedSpec::copy_head(),
        ]
    }

    fn check_feasible(&self) -> Result<(), CoreError> {
        self.config.validate()?;
        let c = &self.config;
        // Directions: 8 token channels, the feature channel, and (for the
        // learned-positional fixture) one channel per position.
        let needed_dirs = match self.kind {
            PlantedKind::CopyHead => FEATURE_DIR + c.max_seq,
            _ => FEATURE_DIR + 1,
        };
        if c.d_model < needed_dirs {
            return Err(CoreError::InfeasibleFixture(format!(
                "d_model {} too small for {} orthogonal directions",
                c.d_model, needed_dirs
            )));
        }
        if c.vocab_size < 8 {
            return Err(CoreError::InfeasibleFixture(format!(
                "vocab_size {} too small for the shared 8-token vocabulary",
                c.vocab_size
            )));
        }
        let needed_head_dirs = match self.kind {
            PlantedKind::DiagonalAttention => 4,
            _ => 1,
        };
        if c.d_head < needed_head_dirs {
            return Err(CoreError::InfeasibleFixture(format!(
                "d_head {} too small for {} orthogonal head directions",
                c.d_head, needed_head_dirs
            )));
        }
        let min_layers = self.write_layer + 1;
        if c.n_layers < min_layers {
            return Err(CoreError::InfeasibleFixture(format!(
                "n_layers {} below the write layer {}",
                c.n_layers, self.write_layer
            )));
        }
        Ok(())
    }
}

fn shared_vocab() -> Vocab {
    Vocab::from_tokens(
        ["A", " B", "X", "M", " C", " D", "E", " F"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .expect("fixture vocabulary is well-formed")
}

fn zero_block(c: &ModelConfig) -> BlockWeights {
    BlockWeights {
        norm1_scale: vec![1.0; c.d_model],
        attn: AttnWeights {
            w_q: vec![Mat::zeros(c.d_model, c.d_head); c.n_heads],
            w_k: vec![Mat::zeros(c.d_model, c.d_head); c.n_heads],
            w_v: vec![Mat::zeros(c.d_model, c.d_head); c.n_heads],
            w_o: vec![Mat::zeros(c.d_head, c.d_model); c.n_heads],
        },
        norm2_scale: vec![1.0; c.d_model],
        mlp: MlpWeights {
            w_in: Mat::zeros(c.d_model, c.d_mlp),
            b_in: vec![0.0; c.d_mlp],
            w_out: Mat::zeros(c.d_mlp, c.d_model),
            b_out: vec![0.0; c.d_model],
        },
    }
}

fn zero_weights(c: &ModelConfig) -> Weights {
    let mut token_embedding = Mat::zeros(c.vocab_size, c.d_model);
    for i in 0..8 {
        token_embedding.set(i, i, EMBED_SCALE);
    }
    let pos_embedding = if c.positional_kind == PositionalKind::Learned {
        let mut p = Mat::zeros(c.max_seq, c.d_model);
        for t in 0..c.max_seq {
            p.set(t, FEATURE_DIR + t, EMBED_SCALE);
        }
        Some(p)
    } else {
        None
    };
    let mut unembedding = Mat::zeros(c.d_model, c.vocab_size);
    for i in 0..8 {
        unembedding.set(i, i, 1.0);
    }
    Weights {
        config: c.clone(),
        token_embedding,
        pos_embedding,
        blocks: (0..c.n_layers).map(|_| zero_block(c)).collect(),
        unembedding,
    }
}

/// Gain pair producing attention score `score` between two 1-sparse
/// residuals (query reads `q_dir`, key reads `k_dir`, both into head dim 0).
fn qk_gain(score: f32, comp: f32, d_head: usize) -> f32 {
    sqrtf(score * sqrtf(d_head as f32)) / comp
}

fn set_mover(
    block: &mut BlockWeights,
    head: usize,
    q_dir: usize,
    k_dir: usize,
    score: f32,
    v_dir: usize,
    out_dir: usize,
    write_mag: f32,
    comp: f32,
    d_head: usize,
) {
    let g = qk_gain(score, comp, d_head);
    block.attn.w_q[head].set(q_dir, 0, g);
    block.attn.w_k[head].set(k_dir, 0, g);
    block.attn.w_v[head].set(v_dir, 0, 1.0);
    block.attn.w_o[head].set(0, out_dir, write_mag / comp);
}

const HARD_SCORE: f32 = 25.0;
const MEANING_WRITE: f32 = 6.0;

fn fixture_experiment(
    idiom: &str,
    corruption: &str,
    position: usize,
    tau: f32,
    layer: usize,
) -> ExperimentSpec {
    ExperimentSpec {
        idiom: idiom.to_string(),
        meaning: String::from("M"),
        corruptions: vec![CorruptionSpec {
            string: corruption.to_string(),
            position,
            tau,
        }],
        layer,
        epsilon: 0.02,
    }
}

/// Deterministic construction: identical specs produce bit-identical
/// weights.
pub fn build_planted_model(spec: &PlantedSpec) -> Result<PlantedModel, CoreError> {
    spec.check_feasible()?;
    let c = &spec.config;
    let comp = one_sparse_comp(c.d_model);
    let mut weights = zero_weights(c);
    let experiment = match spec.kind {
        PlantedKind::MinimalOneLayer => {
            set_mover(
                &mut weights.blocks[0],
                0,
                1,
                0,
                HARD_SCORE,
                0,
                MEANING_DIR,
                MEANING_WRITE,
                comp,
                c.d_head,
            );
            fixture_experiment("A B", "X B", 0, spec.tau, 1)
        }
        PlantedKind::Suppressor => {
            set_mover(
                &mut weights.blocks[0],
                0,
                1,
                0,
                HARD_SCORE,
                0,
                MEANING_DIR,
                8.0,
                comp,
                c.d_head,
            );
            set_mover(
                &mut weights.blocks[0],
                1,
                1,
                0,
                HARD_SCORE,
                0,
                MEANING_DIR,
                -2.0,
                comp,
                c.d_head,
            );
            fixture_experiment("A B", "X B", 0, spec.tau, 1)
        }
        PlantedKind::AugmentedReception => {
            let feature_mag = 0.1;
            set_mover(
                &mut weights.blocks[0],
                0,
                1,
                0,
                HARD_SCORE,
                0,
                FEATURE_DIR,
                feature_mag,
                comp,
                c.d_head,
            );
            // Block 1 residuals carry `2·e_tok + feature_mag·e_8`; its head
            // reads the feature with high gain for the query and the first
            // token's identity for key/value.
            let rms = sqrtf((EMBED_SCALE * EMBED_SCALE + feature_mag * feature_mag)
                / c.d_model as f32);
            let comp_main = EMBED_SCALE / rms;
            let comp_feat = feature_mag / rms;
            let q_gain = 30.0;
            let k_gain =
                HARD_SCORE * sqrtf(c.d_head as f32) / (q_gain * comp_feat * comp_main);
            let b1 = &mut weights.blocks[1];
            b1.attn.w_q[0].set(FEATURE_DIR, 0, q_gain);
            b1.attn.w_k[0].set(0, 0, k_gain);
            b1.attn.w_v[0].set(0, 0, 8.0 / comp_main);
            b1.attn.w_o[0].set(0, MEANING_DIR, 1.0);
            fixture_experiment("A B", "X B", 0, spec.tau, 2)
        }
        PlantedKind::DiagonalAttention => {
            // Orthogonal per-token query/key directions: self-score 30,
            // every cross-token score exactly 0.
            let g = qk_gain(30.0, comp, c.d_head);
            let b0 = &mut weights.blocks[0];
            for (slot, dir) in [0usize, 1, 4, 5].into_iter().enumerate() {
                b0.attn.w_q[0].set(dir, slot, g);
                b0.attn.w_k[0].set(dir, slot, g);
            }
            b0.attn.w_v[0].set(4, 0, 1.0);
            b0.attn.w_o[0].set(0, MEANING_DIR, MEANING_WRITE / comp);
            fixture_experiment("A B C", "A B D", 2, spec.tau, 1)
        }
        PlantedKind::StepMargin => {
            set_mover(
                &mut weights.blocks[1],
                0,
                1,
                0,
                HARD_SCORE,
                0,
                MEANING_DIR,
                MEANING_WRITE,
                comp,
                c.d_head,
            );
            fixture_experiment("A B", "X B", 0, spec.tau, 2)
        }
        PlantedKind::CopyHead => {
            // Residuals carry `2·e_tok + 2·e_(8+pos)`.
            let comp_p = EMBED_SCALE
                / sqrtf(2.0 * EMBED_SCALE * EMBED_SCALE / c.d_model as f32);
            let b1 = &mut weights.blocks[1];
            for p in 0..c.max_seq {
                b1.attn.w_q[0].set(FEATURE_DIR + p, 0, 3.0);
            }
            b1.attn.w_k[0].set(FEATURE_DIR + 1, 0, 3.0);
            b1.attn.w_v[0].set(1, 0, 1.0);
            b1.attn.w_o[0].set(0, MEANING_DIR, MEANING_WRITE / comp_p);
            fixture_experiment("A B C", "A D C", 1, spec.tau, 2)
        }
    };
    weights.validate()?;
    let vocab = shared_vocab();
    experiment.validate(&weights, &vocab)?;
    // Planted edges must live in the experiment's truncated universe.
    let seq_len = tokenize(&experiment.idiom, &vocab)?.len();
    let graph = build_graph(c, seq_len, experiment.layer - 1)?;
    graph
        .validate_patch_set(&spec.planted_edges)
        .map_err(|e| CoreError::InfeasibleFixture(format!("planted edge outside universe: {}", e)))?;
    if !spec
        .suppressor_edges
        .iter()
        .all(|e| spec.planted_edges.contains(e))
    {
        return Err(CoreError::InfeasibleFixture(
            "suppressor edges must be planted".to_string(),
        ));
    }
    Ok(PlantedModel {
        spec: spec.clone(),
        weights,
        vocab,
        experiment,
    })
}

/// Exhaustive single-edge effects over the truncated universe.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEffectReport {
    pub effects: BTreeMap<EdgeId, f32>,
    /// Unpatched metric value the effects are relative to.
    pub baseline: f32,
}

impl EdgeEffectReport {
    /// Edge of maximum absolute effect.
    pub fn argmax(&self) -> Option<(EdgeId, f32)> {
        self.effects
            .iter()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(&e, &d)| (e, d))
    }

    pub fn max_abs(&self) -> f32 {
        self.effects.values().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Smallest nonzero absolute effect, if any.
    pub fn min_positive_abs(&self) -> Option<f32> {
        self.effects
            .values()
            .filter(|d| **d != 0.0)
            .map(|d| d.abs())
            .fold(None, |m, d| Some(m.map_or(d, |x: f32| x.min(d))))
    }
}

// ---------------------------------------------------------------------------
// Naive oracle forward pass.
//
// Everything below reimplements the transformer and the patch semantics
// from scratch over nested Vec buffers, without the shared engine, matrix
// type helpers or cached projections. Weights are read element-wise.
// ---------------------------------------------------------------------------

struct NaiveRun {
    /// `[resid index][token][d_model]`; index 0 is the embedding output.
    resid: Vec<Vec<Vec<f32>>>,
    /// `[layer][head][token][d_model]`, post-output-projection.
    head_out: Vec<Vec<Vec<Vec<f32>>>>,
}

fn naive_norm(c: &ModelConfig, x: &[f32], scale: &[f32]) -> Vec<f32> {
    let eps = 1e-5f32;
    let n = x.len() as f32;
    match c.norm_kind {
        NormKind::Rms => {
            let mut ms = 0.0f32;
            for &v in x {
                ms += v * v;
            }
            ms /= n;
            let inv = 1.0 / sqrtf(ms + eps);
            x.iter().zip(scale).map(|(&v, &s)| v * inv * s).collect()
        }
        NormKind::Layer => {
            let mut mean = 0.0f32;
            for &v in x {
                mean += v;
            }
            mean /= n;
            let mut var = 0.0f32;
            for &v in x {
                var += (v - mean) * (v - mean);
            }
            var /= n;
            let inv = 1.0 / sqrtf(var + eps);
            x.iter()
                .zip(scale)
                .map(|(&v, &s)| (v - mean) * inv * s)
                .collect()
        }
    }
}

/// `x @ m` for `m` of shape `x.len() x out`.
fn naive_project(x: &[f32], m: &Mat) -> Vec<f32> {
    let mut out = vec![0.0f32; m.cols()];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for (i, &xi) in x.iter().enumerate() {
            acc += xi * m.at(i, j);
        }
        *o = acc;
    }
    out
}

fn naive_rotate(v: &mut [f32], pos: usize) {
    for i in 0..v.len() / 2 {
        let theta = pos as f32 / libm::powf(10000.0, (2 * i) as f32 / v.len() as f32);
        let (s, co) = (libm::sinf(theta), libm::cosf(theta));
        let (a, b) = (v[2 * i], v[2 * i + 1]);
        v[2 * i] = a * co - b * s;
        v[2 * i + 1] = a * s + b * co;
    }
}

fn naive_qkv(
    c: &ModelConfig,
    block: &BlockWeights,
    head: usize,
    normed: &[f32],
    pos: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut q = naive_project(normed, &block.attn.w_q[head]);
    let mut k = naive_project(normed, &block.attn.w_k[head]);
    let v = naive_project(normed, &block.attn.w_v[head]);
    if c.positional_kind == PositionalKind::Rotary {
        naive_rotate(&mut q, pos);
        naive_rotate(&mut k, pos);
    }
    (q, k, v)
}

fn naive_forward(
    weights: &Weights,
    ids: &[usize],
    max_layer: usize,
    patch: Option<(&NaiveRun, &[EdgeId])>,
) -> NaiveRun {
    let c = &weights.config;
    let t_len = ids.len();
    let has = |etype: EdgeType, layer: usize, head: usize, src: usize, dst: usize| -> bool {
        match patch {
            None => false,
            Some((_, edges)) => edges.iter().any(|e| {
                if e.etype != etype {
                    return false;
                }
                let (el, eh) = e.layer_head();
                let (es, ed) = (e.src.token(), e.dst.token());
                el == layer && eh == head && es == src && ed == dst
            }),
        }
    };

    let mut resid: Vec<Vec<Vec<f32>>> = Vec::new();
    let mut emb: Vec<Vec<f32>> = Vec::new();
    for (t, &id) in ids.iter().enumerate() {
        let mut row: Vec<f32> = weights.token_embedding.row(id).to_vec();
        if let Some(p) = &weights.pos_embedding {
            for (r, &pv) in row.iter_mut().zip(p.row(t)) {
                *r += pv;
            }
        }
        emb.push(row);
    }
    resid.push(emb);

    let mut all_head_outs: Vec<Vec<Vec<Vec<f32>>>> = Vec::new();
    for l in 0..=max_layer {
        let block = &weights.blocks[l];
        let prev = &resid[l];
        let corrupt_resid: Option<&Vec<Vec<f32>>> = patch.map(|(run, _)| &run.resid[l]);

        let mut layer_heads: Vec<Vec<Vec<f32>>> = Vec::new();
        for h in 0..c.n_heads {
            let mut head_rows: Vec<Vec<f32>> = Vec::new();
            for dst in 0..t_len {
                let normed_dst = naive_norm(c, &prev[dst], &block.norm1_scale);
                let (q_clean, _, _) = naive_qkv(c, block, h, &normed_dst, dst);
                let q_corrupt = if has(EdgeType::Q, l, h, dst, dst) {
                    let cn = naive_norm(c, &corrupt_resid.unwrap()[dst], &block.norm1_scale);
                    Some(naive_qkv(c, block, h, &cn, dst).0)
                } else {
                    None
                };
                // Scores with the diagonal always driven by the clean query.
                let mut scores = Vec::with_capacity(dst + 1);
                for src in 0..=dst {
                    let key_source = if src < dst && has(EdgeType::K, l, h, src, dst) {
                        naive_norm(c, &corrupt_resid.unwrap()[src], &block.norm1_scale)
                    } else {
                        naive_norm(c, &prev[src], &block.norm1_scale)
                    };
                    let (_, k, _) = naive_qkv(c, block, h, &key_source, src);
                    let q = match &q_corrupt {
                        Some(qc) if src < dst => qc,
                        _ => &q_clean,
                    };
                    let mut s = 0.0f32;
                    for i in 0..c.d_head {
                        s += q[i] * k[i];
                    }
                    scores.push(s / sqrtf(c.d_head as f32));
                }
                let mut mx = scores[0];
                for &s in &scores {
                    if s > mx {
                        mx = s;
                    }
                }
                let mut weights_row: Vec<f32> = scores.iter().map(|&s| expf(s - mx)).collect();
                let sum: f32 = weights_row.iter().sum();
                for w in &mut weights_row {
                    *w /= sum;
                }

                let out_row = if has(EdgeType::HeadOut, l, h, dst, dst) {
                    patch.unwrap().0.head_out[l][h][dst].clone()
                } else {
                    let mut mixed = vec![0.0f32; c.d_head];
                    for (src, &w) in weights_row.iter().enumerate() {
                        let value_source = if src < dst && has(EdgeType::V, l, h, src, dst) {
                            naive_norm(c, &corrupt_resid.unwrap()[src], &block.norm1_scale)
                        } else {
                            naive_norm(c, &prev[src], &block.norm1_scale)
                        };
                        let (_, _, v) = naive_qkv(c, block, h, &value_source, src);
                        for i in 0..c.d_head {
                            mixed[i] += w * v[i];
                        }
                    }
                    naive_project(&mixed, &block.attn.w_o[h])
                };
                head_rows.push(out_row);
            }
            layer_heads.push(head_rows);
        }

        let mut next: Vec<Vec<f32>> = prev.clone();
        for head_rows in &layer_heads {
            for (t, row) in head_rows.iter().enumerate() {
                for (n, &v) in next[t].iter_mut().zip(row) {
                    *n += v;
                }
            }
        }
        for t in 0..t_len {
            let y = naive_norm(c, &next[t], &block.norm2_scale);
            let mut hidden = naive_project(&y, &block.mlp.w_in);
            for (hv, &b) in hidden.iter_mut().zip(&block.mlp.b_in) {
                let x = *hv + b;
                *hv = 0.5 * x * (1.0 + libm::erff(x / sqrtf(2.0)));
            }
            let mut out = naive_project(&hidden, &block.mlp.w_out);
            for (ov, &b) in out.iter_mut().zip(&block.mlp.b_out) {
                *ov += b;
            }
            for (n, &v) in next[t].iter_mut().zip(&out) {
                *n += v;
            }
        }
        all_head_outs.push(layer_heads);
        resid.push(next);
    }

    NaiveRun {
        resid,
        head_out: all_head_outs,
    }
}

fn naive_cosine(a: &[f32], b: &[f32]) -> Result<f32, CoreError> {
    let mut dot = 0.0f32;
    let mut na = 0.0f32;
    let mut nb = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::ZeroNorm("oracle final-token residual".to_string()));
    }
    Ok(dot / (sqrtf(na) * sqrtf(nb)))
}

/// Exact single-edge effects for every edge in the truncated universe,
/// computed by the naive forward pass.
pub fn brute_force_edge_effects(
    weights: &Weights,
    vocab: &Vocab,
    spec: &ExperimentSpec,
    corruption_index: usize,
) -> Result<EdgeEffectReport, CoreError> {
    if spec.layer == 0 || spec.layer > weights.config.n_layers {
        return Err(CoreError::LayerOutOfRange {
            layer: spec.layer,
            max: weights.config.n_layers,
        });
    }
    let (idiom, corrupt) = spec.tokenized_pair(corruption_index, vocab)?;
    let meaning = tokenize(&spec.meaning, vocab)?;
    let max_layer = spec.layer - 1;
    let graph = build_graph(&weights.config, idiom.len(), max_layer)?;
    let n_edges = graph.edge_count();
    if n_edges > ORACLE_EDGE_GUARD {
        return Err(CoreError::UniverseTooLarge {
            edges: n_edges,
            guard: ORACLE_EDGE_GUARD,
        });
    }

    let corrupt_run = naive_forward(weights, &corrupt.ids, max_layer, None);
    let meaning_run = naive_forward(weights, &meaning.ids, max_layer, None);
    let meaning_final = &meaning_run.resid[spec.layer][meaning.len() - 1];

    let run_metric = |patched: &[EdgeId]| -> Result<f32, CoreError> {
        let run = naive_forward(
            weights,
            &idiom.ids,
            max_layer,
            Some((&corrupt_run, patched)),
        );
        naive_cosine(&run.resid[spec.layer][idiom.len() - 1], meaning_final)
    };

    let baseline = run_metric(&[])?;
    let mut effects = BTreeMap::new();
    for edge in graph.edges() {
        effects.insert(edge, baseline - run_metric(&[edge])?);
    }
    Ok(EdgeEffectReport { effects, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward;

    #[test]
    fn fixtures_build_and_validate() {
        for spec in PlantedSpec::all() {
            let model = build_planted_model(&spec).unwrap();
            assert!(model.weights.validate().is_ok());
        }
    }

    #[test]
    fn fixture_construction_is_deterministic() {
        for spec in PlantedSpec::all() {
            let a = build_planted_model(&spec).unwrap();
            let b = build_planted_model(&spec).unwrap();
            assert_eq!(a.weights, b.weights, "{:?}", spec.kind);
        }
    }

    #[test]
    fn minimal_fixture_clean_vs_corrupt_separation() {
        let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
        let (idiom, corrupt) = model.experiment.tokenized_pair(0, &model.vocab).unwrap();
        let meaning = tokenize(&model.experiment.meaning, &model.vocab).unwrap();
        let layer = model.experiment.layer;
        let clean = forward(&model.weights, &idiom).unwrap();
        let bad = forward(&model.weights, &corrupt).unwrap();
        let m = forward(&model.weights, &meaning).unwrap();
        let clean_cos = crate::model::layer_cosine(&clean, &m, layer).unwrap();
        let bad_cos = crate::model::layer_cosine(&bad, &m, layer).unwrap();
        assert!(clean_cos >= 0.9, "clean cosine {}", clean_cos);
        assert!(bad_cos <= 0.1, "corrupt cosine {}", bad_cos);
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let mut spec = PlantedSpec::diagonal_attention();
        spec.config.d_head = 2;
        assert!(matches!(
            build_planted_model(&spec),
            Err(CoreError::InfeasibleFixture(_))
        ));
        let mut spec = PlantedSpec::minimal_one_layer();
        spec.config.d_model = 8;
        assert!(matches!(
            build_planted_model(&spec),
            Err(CoreError::InfeasibleFixture(_))
        ));
    }

    #[test]
    fn oracle_argmax_is_a_planted_edge() {
        let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
        let report = brute_force_edge_effects(&model.weights, &model.vocab, &model.experiment, 0)
            .unwrap();
        assert!(report.baseline > 0.9);
        let (top, d) = report.argmax().unwrap();
        assert!(model.spec.planted_edges.contains(&top), "{} ({})", top, d);
    }

    #[test]
    fn oracle_guard_rejects_large_universes() {
        let model = build_planted_model(&PlantedSpec::minimal_one_layer()).unwrap();
        let mut config = model.weights.config.clone();
        config.n_layers = 64;
        config.n_heads = 16;
        let big = zero_weights(&config);
        let mut spec = model.experiment.clone();
        spec.layer = 64;
        assert!(matches!(
            brute_force_edge_effects(&big, &model.vocab, &spec, 0),
            Err(CoreError::UniverseTooLarge { .. })
        ));
    }
}
