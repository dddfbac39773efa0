// SPDX-License-Identifier: MIT OR Apache-2.0

//! Errors for the on-disk formats.

use idiom_circuits_core::CoreError;
use thiserror::Error;

/// Errors raised while reading or writing the repo's file formats. Engine
/// errors (shape mismatches, non-finite tensors, ...) pass through as
/// [`FormatError::Core`] so each failure mode stays distinguishable.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed container header: {0}")]
    MalformedHeader(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}`: declared shape {got:?}, expected {want:?}")]
    TensorShape {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error("tensor `{name}`: {reason}")]
    BadTensor { name: String, reason: String },
    #[error("malformed vocabulary file, line {line}: {reason}")]
    MalformedVocab { line: usize, reason: String },
    #[error("malformed experiment config: {0}")]
    MalformedConfig(String),
    #[error("malformed circuit file: {0}")]
    MalformedCircuit(String),
    #[error("malformed sweep file, line {line}: {reason}")]
    MalformedSweep { line: usize, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl FormatError {
    /// Stable identifier for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            FormatError::Io { .. } => "io",
            FormatError::MalformedHeader(_) => "malformed-header",
            FormatError::MissingTensor(_) => "missing-tensor",
            FormatError::TensorShape { .. } => "tensor-shape",
            FormatError::BadTensor { .. } => "bad-tensor",
            FormatError::MalformedVocab { .. } => "malformed-vocab",
            FormatError::MalformedConfig(_) => "malformed-config",
            FormatError::MalformedCircuit(_) => "malformed-circuit",
            FormatError::MalformedSweep { .. } => "malformed-sweep",
            FormatError::Core(_) => "engine",
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}
