// SPDX-License-Identifier: MIT OR Apache-2.0

//! Circuit discovery for cross-token processing in decoder-only transformers.
//!
//! This crate implements a path-patching variant of automated circuit
//! discovery: a minimal hooked transformer forward pass with full activation
//! capture, a per-token/per-head edge universe over Q/K/V and head-output
//! connections, patched forward passes that splice corrupted-run activations
//! onto arbitrary edge sets, and a greedy reverse-topological pruning loop
//! driven by an intermediate-layer cosine metric.
//!
//! The crate is `no_std` + `alloc`; all IO, file formats and the CLI live in
//! the companion `idiom-circuits` crate.
//!
//! Module map:
//! - [`model`] — config, weights, tokenizer, forward pass, activation cache
//! - [`graph`] — node/edge universe and reverse topological order
//! - [`patching`] — forward passes with edge-level patch substitution
//! - [`experiment`] — idiom/corruption/meaning setup, similarity curves,
//!   semantic-resolution layer selection
//! - [`discovery`] — the pruning loop, threshold sweeps, merging, pruning
//! - [`analysis`] — head-effect tables, QK dot products, augmented reception
//! - [`fixtures`] — planted-circuit models and the brute-force edge oracle

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod discovery;
mod engine;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod graph;
pub mod math;
pub mod model;
pub mod patching;

pub use error::CoreError;
pub use graph::{CircuitGraph, EdgeId, EdgeType, NodeId, PatchSet};
pub use model::{
    forward, ActivationCache, ModelConfig, NormKind, PositionalKind, TokenSequence, Vocab, Weights,
};
pub use patching::forward_with_patches;
