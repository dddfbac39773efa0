// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by the engine modules.

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("shape mismatch for `{name}`: expected {expected}, got {got}")]
    ShapeMismatch {
        name: String,
        expected: String,
        got: String,
    },
    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),
    #[error("no vocabulary entry matches input at byte offset {offset}")]
    Tokenize { offset: usize },
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("sequence length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocab size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("layer index {layer} out of range (resid indices 0..={max})")]
    LayerOutOfRange { layer: usize, max: usize },
    #[error("zero-norm vector in {0}")]
    ZeroNorm(String),
    #[error("patch edge {0} is outside the graph's edge universe")]
    EdgeOutsideUniverse(String),
    #[error("sequence length mismatch: clean {clean} vs corrupt {corrupt}")]
    LengthMismatch { clean: usize, corrupt: usize },
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("k = {k} exceeds vocab_size - 1 = {max}")]
    KTooLarge { k: usize, max: usize },
    #[error("threshold grid must be strictly ascending and positive")]
    GridNotAscending,
    #[error("threshold sweep needs at least {needed} grid points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("circuits are incompatible: {0}")]
    IncompatibleCircuits(String),
    #[error("operation requires a single-corruption circuit, got {0} corruptions")]
    NotSingleCorruption(usize),
    #[error("edge universe has {edges} edges, above the oracle guard of {guard}")]
    UniverseTooLarge { edges: usize, guard: usize },
    #[error("infeasible fixture spec: {0}")]
    InfeasibleFixture(String),
}
