// SPDX-License-Identifier: MIT OR Apache-2.0

//! Post-discovery analysis: head-effect tables across idioms, raw QK
//! dot-product matrices for a chosen head, augmented-reception detection,
//! and antagonist (suppressor) reports.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::discovery::Circuit;
use crate::error::CoreError;
use crate::graph::{EdgeId, EdgeType, NodeId};
use crate::math::dot;
use crate::model::{forward, tokenize, TokenSequence, Vocab, Weights};

/// Default display floor for head-effect cells: `|d|` at or below this is
/// left blank.
pub const DEFAULT_DISPLAY_FLOOR: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadEffectCell {
    /// Signed effect, scaled ×100 (units of 10⁻²).
    pub d_e2: f32,
    /// Set when the head had no retained incoming Query edge in the
    /// idiom's merged circuit.
    pub asterisk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadEffectRow {
    pub idiom: String,
    pub cells: BTreeMap<(usize, usize), HeadEffectCell>,
}

/// One row per idiom, one column per `(layer, head)` with any shown cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadEffectTable {
    pub display_floor: f32,
    pub columns: Vec<(usize, usize)>,
    pub rows: Vec<HeadEffectRow>,
}

/// Builds the cross-idiom head-effect table from one merged circuit per
/// idiom. A cell is the maximum-magnitude HeadOut weight of that head across
/// token positions, sign preserved, scaled ×100; it is shown only when
/// `|d| > display_floor`.
pub fn head_effect_table(circuits: &[Circuit], display_floor: f32) -> HeadEffectTable {
    let mut columns: Vec<(usize, usize)> = Vec::new();
    let mut rows = Vec::with_capacity(circuits.len());
    for circuit in circuits {
        // Heads that have any retained Q edge, at any token position.
        let mut has_q: BTreeMap<(usize, usize), bool> = BTreeMap::new();
        let mut best: BTreeMap<(usize, usize), f32> = BTreeMap::new();
        for (edge, &d) in &circuit.edges {
            let lh = edge.layer_head();
            if edge.etype == EdgeType::Q {
                has_q.insert(lh, true);
            }
            if edge.etype == EdgeType::HeadOut {
                best.entry(lh)
                    .and_modify(|w| {
                        if d.abs() > w.abs() {
                            *w = d;
                        }
                    })
                    .or_insert(d);
            }
        }
        let mut cells = BTreeMap::new();
        for (lh, d) in best {
            if d.abs() > display_floor {
                cells.insert(
                    lh,
                    HeadEffectCell {
                        d_e2: d * 100.0,
                        asterisk: !has_q.get(&lh).copied().unwrap_or(false),
                    },
                );
                if !columns.contains(&lh) {
                    columns.push(lh);
                }
            }
        }
        rows.push(HeadEffectRow {
            idiom: circuit.idiom.clone(),
            cells,
        });
    }
    columns.sort();
    HeadEffectTable {
        display_floor,
        columns,
        rows,
    }
}

/// Inputs for a QK dot-product matrix over a two-slot template.
#[derive(Debug, Clone, PartialEq)]
pub struct QkRequest {
    /// Template with exactly two `{}` slots, e.g. `"He {} the {}"`.
    pub template: String,
    /// Per idiom, the (first-slot, second-slot) fills.
    pub fills: Vec<(String, String)>,
    pub head: (usize, usize),
    /// Per idiom, corruption alternatives for the first slot (key bearer).
    pub slot1_corruptions: Vec<Vec<String>>,
    /// Per idiom, corruption alternatives for the second slot (query bearer).
    pub slot2_corruptions: Vec<Vec<String>>,
    /// When true (the default orientation), rows are labelled by the
    /// query-bearing second-slot fill and columns by the key-bearing first
    /// slot; when false the matrix is transposed.
    pub rows_bear_query: bool,
}

/// Raw (unscaled, post-positional) QK dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct QkMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<f32>>,
    /// Per diagonal cell: (average corrupted-query · clean-key,
    /// average clean-query · corrupted-key). `None` when that slot has no
    /// corruption alternatives.
    pub diag_aux: Vec<(Option<f32>, Option<f32>)>,
}

struct FilledRun {
    tokens: TokenSequence,
    slot1_token: usize,
    slot2_token: usize,
}

fn fill_template(template: &str, a: &str, b: &str) -> Result<(String, usize, usize), CoreError> {
    let first = template.find("{}").ok_or_else(|| {
        CoreError::InvalidExperiment("template must contain two {} slots".to_string())
    })?;
    let rest = &template[first + 2..];
    let second_rel = rest.find("{}").ok_or_else(|| {
        CoreError::InvalidExperiment("template must contain two {} slots".to_string())
    })?;
    if rest[second_rel + 2..].contains("{}") {
        return Err(CoreError::InvalidExperiment(
            "template must contain exactly two {} slots".to_string(),
        ));
    }
    let mut filled = String::with_capacity(template.len() + a.len() + b.len());
    filled.push_str(&template[..first]);
    let a_start = filled.len();
    filled.push_str(a);
    filled.push_str(&template[first + 2..first + 2 + second_rel]);
    let b_start = filled.len();
    filled.push_str(b);
    filled.push_str(&rest[second_rel + 2..]);
    Ok((filled, a_start, b_start))
}

/// Token index whose span is exactly `[start, start + len)`.
fn slot_token(tokens: &TokenSequence, start: usize, len: usize) -> Result<usize, CoreError> {
    let mut offset = 0usize;
    for (i, span) in tokens.text_spans.iter().enumerate() {
        if offset == start || offset + span.len() > start {
            if offset == start && span.len() == len {
                return Ok(i);
            }
            // The slot may begin mid-token when the vocabulary glues a
            // leading space onto the fill; accept a span that ends exactly
            // where the fill ends.
            if offset + span.len() == start + len && offset <= start {
                return Ok(i);
            }
            break;
        }
        offset += span.len();
    }
    Err(CoreError::InvalidExperiment(
        "template slot does not map to a single token".to_string(),
    ))
}

fn run_filled(
    vocab: &Vocab,
    template: &str,
    a: &str,
    b: &str,
) -> Result<FilledRun, CoreError> {
    let (filled, a_start, b_start) = fill_template(template, a, b)?;
    let tokens = tokenize(&filled, vocab)?;
    let slot1_token = slot_token(&tokens, a_start, a.len())?;
    let slot2_token = slot_token(&tokens, b_start, b.len())?;
    Ok(FilledRun {
        tokens,
        slot1_token,
        slot2_token,
    })
}

/// One forward pass per filled template; each cell is the raw dot product of
/// the chosen head's Query vector at the second-slot token with its Key
/// vector at the first-slot token, both taken from the same run. Diagonal
/// cells additionally average the same dot product over runs where one slot
/// is replaced by its corruption alternatives.
pub fn qk_dot_products(
    weights: &Weights,
    vocab: &Vocab,
    request: &QkRequest,
) -> Result<QkMatrix, CoreError> {
    let (layer, head) = request.head;
    if layer >= weights.config.n_layers {
        return Err(CoreError::LayerOutOfRange {
            layer,
            max: weights.config.n_layers - 1,
        });
    }
    if head >= weights.config.n_heads {
        return Err(CoreError::InvalidExperiment(format!(
            "head {} out of range ({} heads)",
            head, weights.config.n_heads
        )));
    }
    if !request.slot1_corruptions.is_empty() && request.slot1_corruptions.len() != request.fills.len()
        || !request.slot2_corruptions.is_empty()
            && request.slot2_corruptions.len() != request.fills.len()
    {
        return Err(CoreError::InvalidExperiment(
            "per-slot corruption lists must match the number of fills".to_string(),
        ));
    }

    let qk_dot = |a: &str, b: &str| -> Result<f32, CoreError> {
        let run = run_filled(vocab, &request.template, a, b)?;
        let cache = forward(weights, &run.tokens)?;
        let lc = &cache.layers[layer];
        Ok(dot(
            lc.q[head].row(run.slot2_token),
            lc.k[head].row(run.slot1_token),
        ))
    };

    let n = request.fills.len();
    // cells[qi][ki]: query bearer from fills[qi].1, key bearer from
    // fills[ki].0.
    let mut cells = Vec::with_capacity(n);
    for qi in 0..n {
        let mut row = Vec::with_capacity(n);
        for ki in 0..n {
            row.push(qk_dot(&request.fills[ki].0, &request.fills[qi].1)?);
        }
        cells.push(row);
    }

    let mut diag_aux = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (&request.fills[i].0, &request.fills[i].1);
        let corrupted_query = match request.slot2_corruptions.get(i) {
            Some(alts) if !alts.is_empty() => {
                let mut sum = 0.0f32;
                for alt in alts {
                    sum += qk_dot(a, alt)?;
                }
                Some(sum / alts.len() as f32)
            }
            _ => None,
        };
        let corrupted_key = match request.slot1_corruptions.get(i) {
            Some(alts) if !alts.is_empty() => {
                let mut sum = 0.0f32;
                for alt in alts {
                    sum += qk_dot(alt, b)?;
                }
                Some(sum / alts.len() as f32)
            }
            _ => None,
        };
        diag_aux.push((corrupted_query, corrupted_key));
    }

    let query_labels: Vec<String> = request.fills.iter().map(|f| f.1.trim().to_string()).collect();
    let key_labels: Vec<String> = request.fills.iter().map(|f| f.0.trim().to_string()).collect();
    if request.rows_bear_query {
        Ok(QkMatrix {
            row_labels: query_labels,
            col_labels: key_labels,
            cells,
            diag_aux,
        })
    } else {
        let mut transposed = Vec::with_capacity(n);
        for ki in 0..n {
            transposed.push((0..n).map(|qi| cells[qi][ki]).collect());
        }
        Ok(QkMatrix {
            row_labels: key_labels,
            col_labels: query_labels,
            cells: transposed,
            diag_aux,
        })
    }
}

/// Head nodes of a single-corruption circuit whose retained Query edge sits
/// at a token strictly after the corrupted position: the query perturbation
/// can only have reached them through an earlier head's write.
pub fn detect_augmented_reception(
    circuit: &Circuit,
    corrupted_position: usize,
) -> Result<Vec<NodeId>, CoreError> {
    if circuit.corruptions.len() != 1 {
        return Err(CoreError::NotSingleCorruption(circuit.corruptions.len()));
    }
    if corrupted_position >= circuit.seq_len {
        return Err(CoreError::InvalidExperiment(format!(
            "corrupted position {} outside sequence of length {}",
            corrupted_position, circuit.seq_len
        )));
    }
    let mut nodes: Vec<NodeId> = circuit
        .edges
        .keys()
        .filter(|e| e.etype == EdgeType::Q && corrupted_position < e.dst.token())
        .map(|e| e.dst)
        .collect();
    nodes.sort();
    nodes.dedup();
    Ok(nodes)
}

/// Retained edges with negative effect, most suppressive first.
pub fn antagonistic_components(circuit: &Circuit) -> Vec<(EdgeId, f32)> {
    let mut out: Vec<(EdgeId, f32)> = circuit
        .edges
        .iter()
        .filter(|(_, &d)| d < 0.0)
        .map(|(&e, &d)| (e, d))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}
