// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment inputs: idiom / corrupted / meaning strings, corruption
//! candidate ranking, layerwise similarity curves, and selection of the
//! semantic-resolution layer.
//!
//! Layer indices here are residual-stream cache indices: 0 is the embedding
//! output and `n` is the output of block `n - 1`. An experiment's layer `L`
//! is the resid index the metric reads, so circuit discovery truncates the
//! graph at head layer `L - 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::model::{
    embedding_cosine, forward, layer_cosine, tokenize, TokenSequence, Vocab, Weights,
};

/// One single-token corruption of the idiom string.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub string: String,
    /// Token position where the corrupted string differs from the idiom.
    pub position: usize,
    pub tau: f32,
}

/// A full experiment: idiom string `I`, meaning string `M`, corruptions `C`,
/// the metric layer `L` (resid index) and the `select_L` tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub idiom: String,
    pub meaning: String,
    pub corruptions: Vec<CorruptionSpec>,
    pub layer: usize,
    pub epsilon: f32,
}

impl ExperimentSpec {
    /// Tokenizes and cross-checks every corruption against the idiom.
    pub fn validate(&self, weights: &Weights, vocab: &Vocab) -> Result<(), CoreError> {
        let n_layers = weights.config.n_layers;
        if self.layer == 0 || self.layer > n_layers {
            return Err(CoreError::LayerOutOfRange {
                layer: self.layer,
                max: n_layers,
            });
        }
        if self.epsilon <= 0.0 {
            return Err(CoreError::InvalidExperiment(String::from(
                "epsilon must be positive",
            )));
        }
        let idiom = tokenize(&self.idiom, vocab)?;
        tokenize(&self.meaning, vocab)?;
        for c in &self.corruptions {
            if c.tau <= 0.0 {
                return Err(CoreError::InvalidExperiment(String::from(
                    "tau must be positive",
                )));
            }
            let corrupt = tokenize(&c.string, vocab)?;
            check_single_token_corruption(&idiom, &corrupt, c.position)?;
        }
        Ok(())
    }

    pub fn tokenized_pair(
        &self,
        corruption_index: usize,
        vocab: &Vocab,
    ) -> Result<(TokenSequence, TokenSequence), CoreError> {
        let c = self.corruptions.get(corruption_index).ok_or_else(|| {
            CoreError::InvalidExperiment(format!("no corruption at index {}", corruption_index))
        })?;
        let idiom = tokenize(&self.idiom, vocab)?;
        let corrupt = tokenize(&c.string, vocab)?;
        check_single_token_corruption(&idiom, &corrupt, c.position)?;
        Ok((idiom, corrupt))
    }
}

pub(crate) fn check_single_token_corruption(
    idiom: &TokenSequence,
    corrupt: &TokenSequence,
    position: usize,
) -> Result<(), CoreError> {
    if idiom.len() != corrupt.len() {
        return Err(CoreError::InvalidExperiment(format!(
            "idiom and corruption tokenize to different lengths ({} vs {})",
            idiom.len(),
            corrupt.len()
        )));
    }
    let diffs: Vec<usize> = (0..idiom.len())
        .filter(|&t| idiom.ids[t] != corrupt.ids[t])
        .collect();
    if diffs.len() != 1 {
        return Err(CoreError::InvalidExperiment(format!(
            "corruption must differ at exactly one token, found {} differing positions",
            diffs.len()
        )));
    }
    if diffs[0] != position {
        return Err(CoreError::InvalidExperiment(format!(
            "corruption differs at position {} but position {} was declared",
            diffs[0], position
        )));
    }
    Ok(())
}

/// Final-token cosine curves of the idiom and each corruption against the
/// meaning string, over resid indices `0..=n_layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCurves {
    pub idiom: Vec<f32>,
    pub corruptions: Vec<Vec<f32>>,
    /// `idiom[l] - max over corruptions[l]` (the idiom curve itself when no
    /// corruptions are present).
    pub margin: Vec<f32>,
}

/// Top-k vocabulary tokens by embedding cosine to `token`, descending,
/// excluding the token itself. Ties break by ascending token id.
pub fn candidate_corruptions(
    token: usize,
    k: usize,
    weights: &Weights,
) -> Result<Vec<(usize, f32)>, CoreError> {
    let vocab_size = weights.config.vocab_size;
    if k == 0 || k > vocab_size - 1 {
        return Err(CoreError::KTooLarge {
            k,
            max: vocab_size - 1,
        });
    }
    let mut scored: Vec<(usize, f32)> = Vec::with_capacity(vocab_size - 1);
    for other in 0..vocab_size {
        if other == token {
            continue;
        }
        scored.push((other, embedding_cosine(token, other, weights)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// One forward pass per string; curves via [`layer_cosine`] at every resid
/// index.
pub fn layerwise_similarity(
    spec: &ExperimentSpec,
    weights: &Weights,
    vocab: &Vocab,
) -> Result<SimilarityCurves, CoreError> {
    let n_points = weights.config.n_layers + 1;
    let meaning_cache = forward(weights, &tokenize(&spec.meaning, vocab)?)?;
    let idiom_cache = forward(weights, &tokenize(&spec.idiom, vocab)?)?;
    let curve = |cache: &crate::model::ActivationCache| -> Result<Vec<f32>, CoreError> {
        (0..n_points)
            .map(|l| layer_cosine(cache, &meaning_cache, l))
            .collect()
    };
    let idiom = curve(&idiom_cache)?;
    let mut corruptions = Vec::with_capacity(spec.corruptions.len());
    for c in &spec.corruptions {
        let cache = forward(weights, &tokenize(&c.string, vocab)?)?;
        corruptions.push(curve(&cache)?);
    }
    let margin = (0..n_points)
        .map(|l| {
            let worst = corruptions
                .iter()
                .map(|c| c[l])
                .fold(f32::NEG_INFINITY, f32::max);
            if worst == f32::NEG_INFINITY {
                idiom[l]
            } else {
                idiom[l] - worst
            }
        })
        .collect();
    Ok(SimilarityCurves {
        idiom,
        corruptions,
        margin,
    })
}

/// Smallest `l` whose margin never grows by `epsilon` or more at any later
/// layer. The last index qualifies vacuously, so a result always exists.
pub fn select_l(margin: &[f32], epsilon: f32) -> usize {
    for l in 0..margin.len() {
        let future_gain = margin[l + 1..]
            .iter()
            .map(|&m| m - margin[l])
            .fold(f32::NEG_INFINITY, f32::max);
        if future_gain == f32::NEG_INFINITY || future_gain < epsilon {
            return l;
        }
    }
    margin.len().saturating_sub(1)
}

pub fn select_l_from_curves(curves: &SimilarityCurves, epsilon: f32) -> usize {
    select_l(&curves.margin, epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    ManualReview,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub check: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Mechanical validation report for one corruption entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub items: Vec<CheckItem>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.status != CheckStatus::Fail)
    }
}

/// Default embedding-cosine floor for corruption candidates.
pub const DEFAULT_COSINE_FLOOR: f32 = 0.25;

/// Mechanical checks only: token counts, single differing position, and an
/// embedding-cosine floor. Semantic/syntactic judgment is reported as
/// requiring manual review, never decided here.
pub fn validate_corruption(
    weights: &Weights,
    vocab: &Vocab,
    idiom: &str,
    corruption: &CorruptionSpec,
    cosine_floor: f32,
) -> ValidationReport {
    let mut items = Vec::new();
    let fail = |items: &mut Vec<CheckItem>, check: &str, detail: String| {
        items.push(CheckItem {
            check: String::from(check),
            status: CheckStatus::Fail,
            detail,
        });
    };
    let pass = |items: &mut Vec<CheckItem>, check: &str, detail: String| {
        items.push(CheckItem {
            check: String::from(check),
            status: CheckStatus::Pass,
            detail,
        });
    };

    if idiom == corruption.string {
        fail(
            &mut items,
            "corruption differs from original",
            String::from("corruption identical to original"),
        );
    } else {
        pass(
            &mut items,
            "corruption differs from original",
            String::from("strings differ"),
        );
    }

    let tokenized = (tokenize(idiom, vocab), tokenize(&corruption.string, vocab));
    match tokenized {
        (Ok(i), Ok(c)) => {
            match check_single_token_corruption(&i, &c, corruption.position) {
                Ok(()) => {
                    pass(
                        &mut items,
                        "single-token corruption",
                        format!("one differing token at position {}", corruption.position),
                    );
                    let (a, b) = (i.ids[corruption.position], c.ids[corruption.position]);
                    match embedding_cosine(a, b, weights) {
                        Ok(cos) if cos >= cosine_floor => pass(
                            &mut items,
                            "embedding cosine floor",
                            format!("cosine {:.4} >= floor {:.4}", cos, cosine_floor),
                        ),
                        Ok(cos) => fail(
                            &mut items,
                            "embedding cosine floor",
                            format!("cosine {:.4} < floor {:.4}", cos, cosine_floor),
                        ),
                        Err(e) => fail(&mut items, "embedding cosine floor", format!("{}", e)),
                    }
                }
                Err(e) => fail(&mut items, "single-token corruption", format!("{}", e)),
            }
        }
        (i, c) => {
            let detail = match (i, c) {
                (Err(e), _) => format!("idiom: {}", e),
                (_, Err(e)) => format!("corruption: {}", e),
                _ => unreachable!(),
            };
            fail(&mut items, "tokenization", detail);
        }
    }

    items.push(CheckItem {
        check: String::from("syntactic structure and literal/figurative semantics"),
        status: CheckStatus::ManualReview,
        detail: String::from("manual review required"),
    });
    ValidationReport { items }
}
