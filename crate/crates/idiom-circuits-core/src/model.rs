// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal decoder-only transformer with full activation capture.
//!
//! Architecture is fixed as pre-norm decoder blocks:
//! `resid -> norm -> attention -> add -> norm -> MLP -> add`.
//! Attention heads write per-head contributions (post-`W_O`) so the cache
//! exposes every hook point the patching engine needs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::engine;
use crate::error::CoreError;
use crate::math::{cosine, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Rms,
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionalKind {
    Learned,
    Rotary,
    None,
}

/// Architecture hyperparameters of a decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub norm_kind: NormKind,
    pub positional_kind: PositionalKind,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_head", self.d_head),
            ("d_mlp", self.d_mlp),
            ("vocab_size", self.vocab_size),
            ("max_seq", self.max_seq),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(CoreError::ShapeMismatch {
                    name: String::from(name),
                    expected: String::from(">= 1"),
                    got: String::from("0"),
                });
            }
        }
        if self.positional_kind == PositionalKind::Rotary && self.d_head % 2 != 0 {
            return Err(CoreError::ShapeMismatch {
                name: String::from("d_head"),
                expected: String::from("even (rotary)"),
                got: format!("{}", self.d_head),
            });
        }
        Ok(())
    }
}

/// Per-layer attention projections. One matrix per head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnWeights {
    /// Per head, `d_model x d_head`.
    pub w_q: Vec<Mat>,
    pub w_k: Vec<Mat>,
    pub w_v: Vec<Mat>,
    /// Per head, `d_head x d_model`.
    pub w_o: Vec<Mat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    /// `d_model x d_mlp`.
    pub w_in: Mat,
    pub b_in: Vec<f32>,
    /// `d_mlp x d_model`.
    pub w_out: Mat,
    pub b_out: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub norm1_scale: Vec<f32>,
    pub attn: AttnWeights,
    pub norm2_scale: Vec<f32>,
    pub mlp: MlpWeights,
}

/// Dense parameter tensors, shape-validated against a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub config: ModelConfig,
    /// `vocab_size x d_model`.
    pub token_embedding: Mat,
    /// `max_seq x d_model`, present iff `positional_kind == Learned`.
    pub pos_embedding: Option<Mat>,
    pub blocks: Vec<BlockWeights>,
    /// `d_model x vocab_size`.
    pub unembedding: Mat,
}

impl Weights {
    /// Checks every tensor shape against the config and rejects non-finite
    /// entries. `load_model` in the companion crate calls this after parsing
    /// a container.
    pub fn validate(&self) -> Result<(), CoreError> {
        self.config.validate()?;
        let c = &self.config;
        let check = |name: String, m: &Mat, rows: usize, cols: usize| {
            if m.rows() != rows || m.cols() != cols {
                return Err(CoreError::ShapeMismatch {
                    name,
                    expected: format!("{}x{}", rows, cols),
                    got: format!("{}x{}", m.rows(), m.cols()),
                });
            }
            if !m.is_finite() {
                return Err(CoreError::NonFinite(name));
            }
            Ok(())
        };
        check(
            String::from("token_embedding"),
            &self.token_embedding,
            c.vocab_size,
            c.d_model,
        )?;
        match (&self.pos_embedding, c.positional_kind) {
            (Some(p), PositionalKind::Learned) => {
                check(String::from("pos_embedding"), p, c.max_seq, c.d_model)?;
            }
            (None, PositionalKind::Learned) => {
                return Err(CoreError::ShapeMismatch {
                    name: String::from("pos_embedding"),
                    expected: format!("{}x{}", c.max_seq, c.d_model),
                    got: String::from("missing"),
                });
            }
            (Some(_), _) => {
                return Err(CoreError::ShapeMismatch {
                    name: String::from("pos_embedding"),
                    expected: String::from("absent (positional_kind != learned)"),
                    got: String::from("present"),
                });
            }
            (None, _) => {}
        }
        if self.blocks.len() != c.n_layers {
            return Err(CoreError::ShapeMismatch {
                name: String::from("blocks"),
                expected: format!("{} layers", c.n_layers),
                got: format!("{}", self.blocks.len()),
            });
        }
        for (l, b) in self.blocks.iter().enumerate() {
            for (field, mats, rows, cols) in [
                ("W_Q", &b.attn.w_q, c.d_model, c.d_head),
                ("W_K", &b.attn.w_k, c.d_model, c.d_head),
                ("W_V", &b.attn.w_v, c.d_model, c.d_head),
                ("W_O", &b.attn.w_o, c.d_head, c.d_model),
            ] {
                if mats.len() != c.n_heads {
                    return Err(CoreError::ShapeMismatch {
                        name: format!("blocks.{}.attn.{}", l, field),
                        expected: format!("{} heads", c.n_heads),
                        got: format!("{}", mats.len()),
                    });
                }
                for (h, m) in mats.iter().enumerate() {
                    check(format!("blocks.{}.attn.{}.{}", l, field, h), m, rows, cols)?;
                }
            }
            for (field, v, len) in [
                ("norm1.scale", &b.norm1_scale, c.d_model),
                ("norm2.scale", &b.norm2_scale, c.d_model),
                ("mlp.b_in", &b.mlp.b_in, c.d_mlp),
                ("mlp.b_out", &b.mlp.b_out, c.d_model),
            ] {
                if v.len() != len {
                    return Err(CoreError::ShapeMismatch {
                        name: format!("blocks.{}.{}", l, field),
                        expected: format!("{}", len),
                        got: format!("{}", v.len()),
                    });
                }
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(CoreError::NonFinite(format!("blocks.{}.{}", l, field)));
                }
            }
            check(format!("blocks.{}.mlp.W_in", l), &b.mlp.w_in, c.d_model, c.d_mlp)?;
            check(format!("blocks.{}.mlp.W_out", l), &b.mlp.w_out, c.d_mlp, c.d_model)?;
        }
        check(
            String::from("unembedding"),
            &self.unembedding,
            c.d_model,
            c.vocab_size,
        )?;
        Ok(())
    }
}

/// Explicit vocabulary table; token id = index.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    /// Builds a vocab from `(id, token)` pairs. Ids must be exactly
    /// `0..n` (in any order); token strings must be unique and non-empty.
    pub fn from_pairs(pairs: Vec<(usize, String)>) -> Result<Self, CoreError> {
        if pairs.is_empty() {
            return Err(CoreError::Vocab(String::from("empty vocabulary")));
        }
        let n = pairs.len();
        let mut tokens: Vec<Option<String>> = alloc::vec![None; n];
        for (id, tok) in pairs {
            if tok.is_empty() {
                return Err(CoreError::Vocab(format!("empty token string for id {}", id)));
            }
            if id >= n {
                return Err(CoreError::Vocab(format!(
                    "id {} out of range for {} entries",
                    id, n
                )));
            }
            if tokens[id].is_some() {
                return Err(CoreError::Vocab(format!("duplicate id {}", id)));
            }
            tokens[id] = Some(tok);
        }
        let tokens: Vec<String> = tokens.into_iter().map(|t| t.unwrap()).collect();
        for i in 0..tokens.len() {
            for j in i + 1..tokens.len() {
                if tokens[i] == tokens[j] {
                    return Err(CoreError::Vocab(format!(
                        "duplicate token string {:?} (ids {} and {})",
                        tokens[i], i, j
                    )));
                }
            }
        }
        Ok(Vocab { tokens })
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CoreError> {
        Self::from_pairs(tokens.into_iter().enumerate().collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }
}

/// A tokenized string; `text_spans` reassemble the input exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub text_spans: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Greedy longest-match tokenization over an explicit vocabulary.
///
/// Errors with the byte offset of the first unsegmentable position.
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<TokenSequence, CoreError> {
    if vocab.is_empty() {
        return Err(CoreError::Vocab(String::from("empty vocabulary")));
    }
    if text.is_empty() {
        return Err(CoreError::Tokenize { offset: 0 });
    }
    let mut ids = Vec::new();
    let mut spans = Vec::new();
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let rest = &text[pos..];
        let mut best: Option<(usize, usize)> = None; // (id, byte len)
        for (id, tok) in vocab.tokens.iter().enumerate() {
            if rest.starts_with(tok.as_str()) {
                let better = match best {
                    Some((_, len)) => tok.len() > len,
                    None => true,
                };
                if better {
                    best = Some((id, tok.len()));
                }
            }
        }
        match best {
            Some((id, len)) => {
                ids.push(id);
                spans.push(String::from(&rest[..len]));
                pos += len;
            }
            None => return Err(CoreError::Tokenize { offset: pos }),
        }
    }
    Ok(TokenSequence { ids, text_spans: spans })
}

/// Per-layer activations captured during one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    /// Per head, `T x d_head` (post-rotary when rotary is enabled).
    pub q: Vec<Mat>,
    pub k: Vec<Mat>,
    pub v: Vec<Mat>,
    /// Per head, `T x T` attention pattern (causal, rows sum to 1).
    pub pattern: Vec<Mat>,
    /// Per head, `T x d_model` post-`W_O` contribution actually added to the
    /// residual stream (the corrupted value when a HeadOut edge is patched).
    pub head_out: Vec<Mat>,
    /// `T x d_model`.
    pub mlp_out: Mat,
}

/// Full activation record of one forward pass.
///
/// `resid[l]` is the post-MLP residual stream of layer `l - 1`; `resid[0]`
/// is the embedding output. A truncated (patched) pass carries
/// `layers.len() <= n_layers` and `logits = None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCache {
    pub resid: Vec<Mat>,
    pub layers: Vec<LayerCache>,
    /// `T x vocab_size`; present only for full-depth passes.
    pub logits: Option<Mat>,
}

impl ActivationCache {
    pub fn seq_len(&self) -> usize {
        self.resid[0].rows()
    }

    /// Final-token residual vector at cache index `layer`
    /// (0 = embedding output, `n` = output of block `n - 1`).
    pub fn final_token_resid(&self, layer: usize) -> Result<&[f32], CoreError> {
        if layer >= self.resid.len() {
            return Err(CoreError::LayerOutOfRange {
                layer,
                max: self.resid.len() - 1,
            });
        }
        let t = self.seq_len() - 1;
        Ok(self.resid[layer].row(t))
    }
}

/// Plain forward pass with full activation capture.
///
/// Deterministic: identical inputs produce bit-identical caches.
pub fn forward(weights: &Weights, tokens: &TokenSequence) -> Result<ActivationCache, CoreError> {
    engine::run_forward(weights, tokens, None, weights.config.n_layers.saturating_sub(1), true)
}

/// Cosine similarity between two rows of the token embedding.
pub fn embedding_cosine(
    token_a: usize,
    token_b: usize,
    weights: &Weights,
) -> Result<f32, CoreError> {
    let vocab_size = weights.config.vocab_size;
    for id in [token_a, token_b] {
        if id >= vocab_size {
            return Err(CoreError::TokenOutOfRange { id, vocab_size });
        }
    }
    cosine(
        weights.token_embedding.row(token_a),
        weights.token_embedding.row(token_b),
        "token embedding",
    )
}

/// Final-token cosine similarity between two caches at one resid index.
pub fn layer_cosine(
    cache_a: &ActivationCache,
    cache_b: &ActivationCache,
    layer: usize,
) -> Result<f32, CoreError> {
    let a = cache_a.final_token_resid(layer)?;
    let b = cache_b.final_token_resid(layer)?;
    cosine(a, b, "final-token residual")
}
