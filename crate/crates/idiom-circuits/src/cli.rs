// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `idiom-circuits` command-line front end.
//!
//! Every subcommand reads its inputs from files (model container,
//! vocabulary, TOML experiment config, circuit JSON, sweep CSV), runs one
//! engine operation and writes the declared outputs. On failure the binary
//! exits nonzero after printing a machine-readable JSON error record to
//! stderr.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use idiom_circuits_core::analysis::{
    antagonistic_components, detect_augmented_reception, head_effect_table, DEFAULT_DISPLAY_FLOOR,
};
use idiom_circuits_core::discovery::{
    discover_circuit, merge_circuits, prune_circuit, suggest_threshold_from, threshold_sweep,
    Circuit,
};
use idiom_circuits_core::experiment::{layerwise_similarity, select_l_from_curves};
use idiom_circuits_core::fixtures::brute_force_edge_effects;
use idiom_circuits_core::model::tokenize;
use idiom_circuits_core::CoreError;
use thiserror::Error;

use crate::chart::export_sweep_chart;
use crate::circuit_io::{
    load_circuit, load_sweep, save_circuit, save_sweep, sweep_to_csv, SweepTable,
};
use crate::container::load_model;
use crate::error::FormatError;
use crate::expconfig::load_experiment;
use crate::render::{render_graph, RenderStyle};
use crate::tables::{format_head_effect_table, head_effect_table_to_csv};
use crate::vocabfile::load_vocab;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Format(e) => e.kind(),
            CliError::Core(_) => "engine",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "idiom-circuits",
    about = "Cross-token circuit discovery for decoder-only transformers",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Layerwise similarity curves of idiom/corruptions against the meaning
    /// string, plus the selected metric layer.
    Similarity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        experiment: PathBuf,
        /// Override the config's layer-selection tolerance.
        #[arg(long)]
        epsilon: Option<f32>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pruning loop for one corruption and write the circuit JSON.
    Discover {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        experiment: PathBuf,
        /// Index into the config's corruption list.
        #[arg(long, default_value_t = 0)]
        corruption: usize,
        /// Override the corruption's threshold.
        #[arg(long)]
        tau: Option<f32>,
        /// Override the config's metric layer.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One discovery run per grid point; writes a tau/edge-count/cosine CSV.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        experiment: PathBuf,
        #[arg(long, default_value_t = 0)]
        corruption: usize,
        /// Comma-separated ascending thresholds, e.g. `0.001,0.002,0.005`.
        #[arg(long = "tau-grid")]
        tau_grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heuristic threshold suggestion from a sweep CSV.
    SuggestTau {
        #[arg(long)]
        sweep: PathBuf,
        /// Output JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Union-merge per-corruption circuits of one idiom.
    Merge {
        #[arg(long)]
        out: PathBuf,
        /// Circuit JSON files to merge.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Drop heads with no incoming edges or only a Query edge, to fixpoint.
    Prune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Head-effect table, antagonists and augmented-reception report over
    /// one merged circuit per idiom.
    Analyze {
        /// Circuit JSON files, one merged circuit per idiom.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Display floor for head-effect cells.
        #[arg(long, default_value_t = DEFAULT_DISPLAY_FLOOR)]
        floor: f32,
        /// `csv` for delimited output, anything else for fixed-width text.
        #[arg(long, default_value = "text")]
        format: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a circuit as DOT or a sweep as an SVG chart.
    Render {
        /// Circuit JSON to render (formats: dot, json-like).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Sweep CSV to chart (formats: svg, csv).
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Vocabulary for token labels on circuit renders.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// One of dot, svg, csv, json-like; defaults per input kind.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive single-edge effects (the brute-force oracle) as CSV.
    Oracle {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        experiment: PathBuf,
        #[arg(long, default_value_t = 0)]
        corruption: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        }),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<f32>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f32>()
                .map_err(|_| CliError::Usage(format!("`{}` is not a threshold", s)))
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Similarity {
            model,
            vocab,
            experiment,
            epsilon,
            out,
        } => {
            let weights = load_model(&model)?;
            let vocab = load_vocab(&vocab)?;
            let mut spec = load_experiment(&experiment)?;
            if let Some(eps) = epsilon {
                spec.epsilon = eps;
            }
            spec.validate(&weights, &vocab)?;
            let curves = layerwise_similarity(&spec, &weights, &vocab)?;
            let selected = select_l_from_curves(&curves, spec.epsilon);
            let mut text = String::from("layer,idiom");
            for c in &spec.corruptions {
                text.push_str(&format!(",{}", c.string.replace(',', ";")));
            }
            text.push_str(",margin\n");
            for l in 0..curves.idiom.len() {
                text.push_str(&format!("{},{}", l, curves.idiom[l]));
                for curve in &curves.corruptions {
                    text.push_str(&format!(",{}", curve[l]));
                }
                text.push_str(&format!(",{}\n", curves.margin[l]));
            }
            text.push_str(&format!("# selected_layer={}\n", selected));
            write_or_print(out.as_deref(), &text)
        }
        Command::Discover {
            model,
            vocab,
            experiment,
            corruption,
            tau,
            layer,
            out,
        } => {
            let weights = load_model(&model)?;
            let vocab = load_vocab(&vocab)?;
            let mut spec = load_experiment(&experiment)?;
            if let Some(layer) = layer {
                spec.layer = layer;
            }
            if let Some(tau) = tau {
                let c = spec.corruptions.get_mut(corruption).ok_or_else(|| {
                    CliError::Usage(format!("no corruption at index {}", corruption))
                })?;
                c.tau = tau;
            }
            spec.validate(&weights, &vocab)?;
            let tau = spec
                .corruptions
                .get(corruption)
                .ok_or_else(|| CliError::Usage(format!("no corruption at index {}", corruption)))?
                .tau;
            let circuit = discover_circuit(&weights, &vocab, &spec, corruption, tau)?;
            save_circuit(&out, &circuit)?;
            Ok(())
        }
        Command::Sweep {
            model,
            vocab,
            experiment,
            corruption,
            tau_grid,
            out,
        } => {
            let weights = load_model(&model)?;
            let vocab = load_vocab(&vocab)?;
            let spec = load_experiment(&experiment)?;
            spec.validate(&weights, &vocab)?;
            let grid = parse_grid(&tau_grid)?;
            let sweep = threshold_sweep(&weights, &vocab, &spec, corruption, &grid)?;
            save_sweep(&out, &SweepTable::from(&sweep))?;
            Ok(())
        }
        Command::SuggestTau { sweep, out } => {
            let table = load_sweep(&sweep)?;
            let suggestion = suggest_threshold_from(&table.grid, &table.edge_counts)?;
            let record = serde_json::json!({
                "tau_star": suggestion.tau_star,
                "flags": suggestion.flags,
            });
            let mut text = serde_json::to_string_pretty(&record).unwrap();
            text.push('\n');
            write_or_print(out.as_deref(), &text)
        }
        Command::Merge { out, inputs } => {
            let circuits: Vec<Circuit> = inputs
                .iter()
                .map(|p| load_circuit(p))
                .collect::<Result<_, _>>()?;
            let merged = merge_circuits(&circuits)?;
            save_circuit(&out, &merged)?;
            Ok(())
        }
        Command::Prune { input, out } => {
            let circuit = load_circuit(&input)?;
            let pruned = prune_circuit(&circuit);
            save_circuit(&out, &pruned)?;
            Ok(())
        }
        Command::Analyze {
            input,
            floor,
            format,
            out,
        } => {
            let circuits: Vec<Circuit> = input
                .iter()
                .map(|p| load_circuit(p))
                .collect::<Result<_, _>>()?;
            let table = head_effect_table(&circuits, floor);
            let mut text = if format == "csv" {
                head_effect_table_to_csv(&table)
            } else {
                format_head_effect_table(&table)
            };
            for circuit in &circuits {
                let antagonists = antagonistic_components(circuit);
                if !antagonists.is_empty() {
                    text.push_str(&format!("\nantagonists of {}:\n", circuit.idiom));
                    for (edge, d) in antagonists {
                        text.push_str(&format!("  {}  d={}\n", edge, d));
                    }
                }
                if circuit.corruptions.len() == 1 {
                    let nodes =
                        detect_augmented_reception(circuit, circuit.corruptions[0].position)?;
                    if !nodes.is_empty() {
                        text.push_str(&format!("\naugmented reception in {}:\n", circuit.idiom));
                        for node in nodes {
                            text.push_str(&format!("  {}\n", node));
                        }
                    }
                }
            }
            write_or_print(out.as_deref(), &text)
        }
        Command::Render {
            input,
            sweep,
            vocab,
            format,
            out,
        } => match (input, sweep) {
            (Some(input), None) => {
                let circuit = load_circuit(&input)?;
                let format = format.unwrap_or_else(|| "dot".into());
                let text = match format.as_str() {
                    "dot" => {
                        let labels = match vocab {
                            Some(path) => {
                                let vocab = load_vocab(&path)?;
                                Some(tokenize(&circuit.idiom, &vocab)?.text_spans)
                            }
                            None => None,
                        };
                        render_graph(&circuit, &RenderStyle::default(), labels.as_deref())
                    }
                    "json-like" => crate::circuit_io::circuit_to_string(&circuit),
                    other => {
                        return Err(CliError::Usage(format!(
                            "format `{}` does not apply to circuits (use dot or json-like)",
                            other
                        )))
                    }
                };
                write_or_print(Some(&out), &text)
            }
            (None, Some(sweep)) => {
                let table = load_sweep(&sweep)?;
                let format = format.unwrap_or_else(|| "svg".into());
                let text = match format.as_str() {
                    "svg" => export_sweep_chart(&table),
                    "csv" => sweep_to_csv(&table),
                    other => {
                        return Err(CliError::Usage(format!(
                            "format `{}` does not apply to sweeps (use svg or csv)",
                            other
                        )))
                    }
                };
                write_or_print(Some(&out), &text)
            }
            _ => Err(CliError::Usage(
                "render needs exactly one of --input (circuit) or --sweep".into(),
            )),
        },
        Command::Oracle {
            model,
            vocab,
            experiment,
            corruption,
            out,
        } => {
            let weights = load_model(&model)?;
            let vocab = load_vocab(&vocab)?;
            let spec = load_experiment(&experiment)?;
            spec.validate(&weights, &vocab)?;
            let report = brute_force_edge_effects(&weights, &vocab, &spec, corruption)?;
            let mut text = format!("# baseline={}\n", report.baseline);
            text.push_str("edge,d\n");
            for (edge, d) in &report.effects {
                text.push_str(&format!("{},{}\n", edge, d));
            }
            write_or_print(Some(&out), &text)
        }
    }
}
