// SPDX-License-Identifier: MIT OR Apache-2.0

//! Circuit JSON files and sweep CSV files.
//!
//! Circuits serialize to a single JSON document: model config, sequence
//! length, metric layer, the idiom/meaning strings, the contributing
//! corruptions, retained edges (sorted, one record per edge with its signed
//! weight) and the achieved cosine values. Sweeps serialize to CSV with the
//! columns `tau,edge_count,cosine`. Both writers are deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use idiom_circuits_core::discovery::{AchievedCosine, Circuit, CorruptionRecord, SweepResult};
use idiom_circuits_core::EdgeId;
use serde::{Deserialize, Serialize};

use crate::container::{config_from_header, config_to_header, ConfigHeader};
use crate::error::{io_err, FormatError};
use crate::expconfig::{shortest, CorruptionFile};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeFile {
    etype: String,
    layer: usize,
    head: usize,
    src_token: usize,
    dst_token: usize,
    weight: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AchievedFile {
    corruption: String,
    full: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pruned: Option<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitFile {
    config: ConfigHeader,
    seq_len: usize,
    layer: usize,
    idiom: String,
    meaning: String,
    corruptions: Vec<CorruptionFile>,
    edges: Vec<EdgeFile>,
    achieved: Vec<AchievedFile>,
}

fn edge_to_file(edge: &EdgeId, weight: f32) -> EdgeFile {
    let (layer, head) = edge.layer_head();
    let (src_token, dst_token) = (edge.src.token(), edge.dst.token());
    EdgeFile {
        etype: edge.etype.to_string(),
        layer,
        head,
        src_token,
        dst_token,
        weight,
    }
}

fn edge_from_file(e: &EdgeFile) -> Result<EdgeId, FormatError> {
    let bad = |reason: &str| FormatError::MalformedCircuit(format!("edge record: {}", reason));
    match e.etype.as_str() {
        "Q" => {
            if e.src_token != e.dst_token {
                return Err(bad("Query edges connect a token to itself"));
            }
            Ok(EdgeId::q(e.layer, e.head, e.dst_token))
        }
        "K" => Ok(EdgeId::k(e.layer, e.head, e.src_token, e.dst_token)),
        "V" => Ok(EdgeId::v(e.layer, e.head, e.src_token, e.dst_token)),
        "HeadOut" => {
            if e.src_token != e.dst_token {
                return Err(bad("HeadOut edges connect a token to itself"));
            }
            Ok(EdgeId::head_out(e.layer, e.head, e.dst_token))
        }
        other => Err(bad(&format!("unknown edge type `{}`", other))),
    }
}

pub fn circuit_to_string(circuit: &Circuit) -> String {
    let file = CircuitFile {
        config: config_to_header(&circuit.config),
        seq_len: circuit.seq_len,
        layer: circuit.layer,
        idiom: circuit.idiom.clone(),
        meaning: circuit.meaning.clone(),
        corruptions: circuit
            .corruptions
            .iter()
            .map(|c| CorruptionFile {
                string: c.string.clone(),
                position: c.position,
                tau: shortest(c.tau),
            })
            .collect(),
        edges: circuit
            .edges
            .iter()
            .map(|(e, &w)| edge_to_file(e, w))
            .collect(),
        achieved: circuit
            .achieved
            .iter()
            .map(|a| AchievedFile {
                corruption: a.corruption.clone(),
                full: a.full,
                pruned: a.pruned,
            })
            .collect(),
    };
    let mut text =
        serde_json::to_string_pretty(&file).expect("circuit serialization is infallible");
    text.push('\n');
    text
}

pub fn circuit_from_str(text: &str) -> Result<Circuit, FormatError> {
    let file: CircuitFile =
        serde_json::from_str(text).map_err(|e| FormatError::MalformedCircuit(e.to_string()))?;
    let config = config_from_header(&file.config)?;
    let mut edges = BTreeMap::new();
    for e in &file.edges {
        edges.insert(edge_from_file(e)?, e.weight);
    }
    Ok(Circuit {
        config,
        seq_len: file.seq_len,
        layer: file.layer,
        idiom: file.idiom,
        meaning: file.meaning,
        corruptions: file
            .corruptions
            .iter()
            .map(|c| CorruptionRecord {
                string: c.string.clone(),
                position: c.position,
                tau: c.tau as f32,
            })
            .collect(),
        edges,
        achieved: file
            .achieved
            .iter()
            .map(|a| AchievedCosine {
                corruption: a.corruption.clone(),
                full: a.full,
                pruned: a.pruned,
            })
            .collect(),
    })
}

pub fn save_circuit(path: &Path, circuit: &Circuit) -> Result<(), FormatError> {
    std::fs::write(path, circuit_to_string(circuit)).map_err(|e| io_err(path, e))
}

pub fn load_circuit(path: &Path) -> Result<Circuit, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    circuit_from_str(&text)
}

/// The sweep table without the per-τ circuits, as stored in a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub grid: Vec<f32>,
    pub edge_counts: Vec<usize>,
    pub cosines: Vec<f32>,
}

impl From<&SweepResult> for SweepTable {
    fn from(sweep: &SweepResult) -> Self {
        SweepTable {
            grid: sweep.grid.clone(),
            edge_counts: sweep.edge_counts.clone(),
            cosines: sweep.cosines.clone(),
        }
    }
}

pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = String::from("tau,edge_count,cosine\n");
    for i in 0..table.grid.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            table.grid[i], table.edge_counts[i], table.cosines[i]
        ));
    }
    out
}

pub fn sweep_from_csv(text: &str) -> Result<SweepTable, FormatError> {
    let mut table = SweepTable {
        grid: Vec::new(),
        edge_counts: Vec::new(),
        cosines: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "tau,edge_count,cosine" {
                return Err(FormatError::MalformedSweep {
                    line: 1,
                    reason: "expected header `tau,edge_count,cosine`".into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| FormatError::MalformedSweep {
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        table.grid.push(
            fields[0]
                .parse()
                .map_err(|_| bad(format!("`{}` is not a threshold", fields[0])))?,
        );
        table.edge_counts.push(
            fields[1]
                .parse()
                .map_err(|_| bad(format!("`{}` is not an edge count", fields[1])))?,
        );
        table.cosines.push(
            fields[2]
                .parse()
                .map_err(|_| bad(format!("`{}` is not a cosine", fields[2])))?,
        );
    }
    Ok(table)
}

pub fn save_sweep(path: &Path, table: &SweepTable) -> Result<(), FormatError> {
    std::fs::write(path, sweep_to_csv(table)).map_err(|e| io_err(path, e))
}

pub fn load_sweep(path: &Path) -> Result<SweepTable, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    sweep_from_csv(&text)
}
