// SPDX-License-Identifier: MIT OR Apache-2.0

//! File formats, exporters and the CLI for the `idiom-circuits-core`
//! discovery engine.
//!
//! Module map:
//! - [`container`] — the tensor container format (model weights on disk)
//! - [`vocabfile`] — tab-separated vocabulary files
//! - [`expconfig`] — TOML experiment configs
//! - [`circuit_io`] — circuit JSON and sweep CSV serialization
//! - [`tables`] — fixed-width head-effect and QK table formatting
//! - [`render`] — Graphviz DOT rendering of circuits
//! - [`chart`] — SVG dual-axis threshold-sweep charts
//! - [`cli`] — the `idiom-circuits` command-line front end

pub mod chart;
pub mod circuit_io;
pub mod cli;
pub mod container;
pub mod error;
pub mod expconfig;
pub mod render;
pub mod tables;
pub mod vocabfile;

pub use error::FormatError;
