// SPDX-License-Identifier: MIT OR Apache-2.0

//! Patched forward passes.
//!
//! A patched edge replaces the value flowing along that one connection with
//! its value from a corrupted run:
//!
//! - Q edge into head `(l, h, t)`: attention scores to tokens before `t` use
//!   a query computed from the corrupted resid at `(l-1, t)`; the diagonal
//!   score keeps the running-stream query. Softmax is taken over the mixed
//!   row.
//! - K/V edge from source token `s < t`: the key (value) for that source is
//!   computed from the corrupted resid at `(l-1, s)`. Same-token keys and
//!   values always come from the running stream.
//! - HeadOut edge: the corrupted post-`W_O` head output is added to the
//!   residual stream instead of the recomputed one.
//!
//! The substitution source is always the pre-norm corrupted residual with
//! normalization recomputed; norms and MLPs belong to single-token
//! processing and are never patched.

use crate::engine::{self, PatchContext};
use crate::error::CoreError;
use crate::graph::{build_graph, PatchSet};
use crate::model::{ActivationCache, TokenSequence, Weights};

/// Recomputes the clean run layer by layer with `patches` substituted from
/// `corrupt_cache`, up to block `max_layer` inclusive.
///
/// With an empty patch set this is bit-identical to [`crate::model::forward`]
/// truncated at the same layer.
pub fn forward_with_patches(
    weights: &Weights,
    clean: &TokenSequence,
    corrupt_cache: &ActivationCache,
    patches: &PatchSet,
    max_layer: usize,
) -> Result<ActivationCache, CoreError> {
    let graph = build_graph(&weights.config, clean.len(), max_layer)?;
    graph.validate_patch_set(patches)?;
    engine::run_forward(
        weights,
        clean,
        Some(PatchContext {
            corrupt: corrupt_cache,
            patches,
        }),
        max_layer,
        true,
    )
}
