// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixed-width and delimited text renderings of the analysis tables.
//!
//! The head-effect formatter mirrors the cross-idiom layout: one row per
//! idiom, columns grouped by layer, cells in units of 10⁻² rounded to
//! integers, an asterisk on heads without incoming Query edges, and `--`
//! for effects at or below the display floor.

use std::collections::BTreeMap;

use idiom_circuits_core::analysis::{HeadEffectTable, QkMatrix};
use idiom_circuits_core::discovery::Circuit;
use idiom_circuits_core::{EdgeId, ModelConfig, NormKind, PositionalKind};

use crate::error::FormatError;

/// Spaces between columns of the same layer group / between groups.
const COL_GAP: usize = 2;
const GROUP_GAP: usize = 4;

fn cell_text(d_e2: f32, asterisk: bool) -> String {
    // Round half away from zero, matching how the reference values are
    // printed (a drop of 0.014 shows as 1).
    let rounded = d_e2.round() as i64;
    if asterisk {
        format!("{}*", rounded)
    } else {
        format!("{}", rounded)
    }
}

/// Renders the table as fixed-width text. Deterministic; lines carry no
/// trailing whitespace.
pub fn format_head_effect_table(table: &HeadEffectTable) -> String {
    let cols = &table.columns;
    // Pre-render every cell.
    let rendered: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|row| {
            cols.iter()
                .map(|lh| match row.cells.get(lh) {
                    Some(c) => cell_text(c.d_e2, c.asterisk),
                    None => "--".to_string(),
                })
                .collect()
        })
        .collect();
    let head_labels: Vec<String> = cols.iter().map(|&(_, h)| format!("H{}", h)).collect();
    let mut widths: Vec<usize> = head_labels.iter().map(|l| l.len()).collect();
    for row in &rendered {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let idiom_width = table
        .rows
        .iter()
        .map(|r| r.idiom.len())
        .chain(["Idiom".len()])
        .max()
        .unwrap_or(5);

    // Layer groups over consecutive columns.
    let mut groups: Vec<(usize, usize, usize)> = Vec::new(); // (layer, start, end)
    for (j, &(layer, _)) in cols.iter().enumerate() {
        match groups.last_mut() {
            Some((l, _, end)) if *l == layer => *end = j + 1,
            _ => groups.push((layer, j, j + 1)),
        }
    }
    let group_width = |start: usize, end: usize| -> usize {
        widths[start..end].iter().sum::<usize>() + COL_GAP * (end - start - 1)
    };

    let mut out = String::new();
    // Group header line.
    let mut line = " ".repeat(idiom_width);
    for &(layer, start, end) in &groups {
        line.push_str(&" ".repeat(GROUP_GAP));
        let w = group_width(start, end);
        let label = format!("Layer {}", layer);
        let pad = w.saturating_sub(label.len());
        line.push_str(&" ".repeat(pad / 2));
        line.push_str(&label);
        line.push_str(&" ".repeat(pad - pad / 2));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    // Column header line.
    let mut line = format!("{:<width$}", "Idiom", width = idiom_width);
    for &(_, start, end) in &groups {
        line.push_str(&" ".repeat(GROUP_GAP));
        for j in start..end {
            if j > start {
                line.push_str(&" ".repeat(COL_GAP));
            }
            line.push_str(&format!("{:>width$}", head_labels[j], width = widths[j]));
        }
    }
    out.push_str(line.trim_end());
    out.push('\n');
    let total = line.trim_end().len();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    // Data rows.
    for (row, cells) in table.rows.iter().zip(&rendered) {
        let mut line = format!("{:<width$}", row.idiom, width = idiom_width);
        for &(_, start, end) in &groups {
            line.push_str(&" ".repeat(GROUP_GAP));
            for j in start..end {
                if j > start {
                    line.push_str(&" ".repeat(COL_GAP));
                }
                line.push_str(&format!("{:>width$}", cells[j], width = widths[j]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Renders the table as comma-separated text (one column per `(layer, head)`
/// pair, blank cells empty).
pub fn head_effect_table_to_csv(table: &HeadEffectTable) -> String {
    let mut out = String::from("idiom");
    for &(layer, head) in &table.columns {
        out.push_str(&format!(",L{}H{}", layer, head));
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.idiom);
        for lh in &table.columns {
            out.push(',');
            if let Some(c) = row.cells.get(lh) {
                out.push_str(&cell_text(c.d_e2, c.asterisk));
            }
        }
        out.push('\n');
    }
    out
}

/// Renders a QK dot-product matrix as fixed-width text; diagonal cells
/// carry their corrupted-average pair in parentheses.
pub fn format_qk_matrix(matrix: &QkMatrix) -> String {
    let n = matrix.row_labels.len();
    let m = matrix.col_labels.len();
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(n);
    for r in 0..n {
        let mut row = Vec::with_capacity(m);
        for c in 0..m {
            let mut text = format!("{}", matrix.cells[r][c].round() as i64);
            if r == c {
                if let (Some(cq), Some(ck)) = matrix.diag_aux[r] {
                    text.push_str(&format!(
                        " ({}, {})",
                        cq.round() as i64,
                        ck.round() as i64
                    ));
                }
            }
            row.push(text);
        }
        cells.push(row);
    }
    let label_width = matrix
        .row_labels
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(0);
    let mut widths: Vec<usize> = matrix.col_labels.iter().map(|l| l.len()).collect();
    for row in &cells {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = " ".repeat(label_width);
    for (j, label) in matrix.col_labels.iter().enumerate() {
        line.push_str(&" ".repeat(COL_GAP));
        line.push_str(&format!("{:>width$}", label, width = widths[j]));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    for (r, row) in cells.iter().enumerate() {
        let mut line = format!("{:<width$}", matrix.row_labels[r], width = label_width);
        for (j, cell) in row.iter().enumerate() {
            line.push_str(&" ".repeat(COL_GAP));
            line.push_str(&format!("{:>width$}", cell, width = widths[j]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Parses a head-effect transcription (CSV with the columns
/// `idiom,layer,head,d_e2,asterisk`, `#` comments allowed) into one
/// synthetic merged circuit per idiom, suitable for
/// [`idiom_circuits_core::analysis::head_effect_table`]. Each entry becomes
/// a HeadOut edge with weight `d_e2 / 100`; heads without an asterisk also
/// get a Query edge so the asterisk rule reproduces the flags.
pub fn reference_circuits_from_csv(text: &str) -> Result<Vec<Circuit>, FormatError> {
    struct Entry {
        layer: usize,
        head: usize,
        d: f32,
        asterisk: bool,
    }
    let mut idioms: Vec<String> = Vec::new();
    let mut entries: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| FormatError::MalformedConfig(format!("line {}: {}", i + 1, reason));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let idiom = fields[0].to_string();
        let layer: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("`{}` is not a layer", fields[1])))?;
        let head: usize = fields[2]
            .parse()
            .map_err(|_| bad(format!("`{}` is not a head", fields[2])))?;
        let d_e2: f32 = fields[3]
            .parse()
            .map_err(|_| bad(format!("`{}` is not an effect", fields[3])))?;
        let asterisk = match fields[4] {
            "*" => true,
            "" => false,
            other => return Err(bad(format!("`{}` is not an asterisk flag", other))),
        };
        if !idioms.contains(&idiom) {
            idioms.push(idiom.clone());
        }
        entries.entry(idiom).or_default().push(Entry {
            layer,
            head,
            d: d_e2 / 100.0,
            asterisk,
        });
    }
    let max_layer = entries
        .values()
        .flatten()
        .map(|e| e.layer)
        .max()
        .ok_or_else(|| FormatError::MalformedConfig("no data rows".into()))?;
    let max_head = entries.values().flatten().map(|e| e.head).max().unwrap();
    let config = ModelConfig {
        n_layers: max_layer + 1,
        n_heads: max_head + 1,
        d_model: 8,
        d_head: 2,
        d_mlp: 2,
        vocab_size: 4,
        max_seq: 4,
        norm_kind: NormKind::Rms,
        positional_kind: PositionalKind::None,
    };
    let mut circuits = Vec::with_capacity(idioms.len());
    for idiom in idioms {
        let mut edges = BTreeMap::new();
        for e in &entries[&idiom] {
            edges.insert(EdgeId::head_out(e.layer, e.head, 1), e.d);
            if !e.asterisk {
                edges.insert(EdgeId::q(e.layer, e.head, 1), e.d);
            }
        }
        circuits.push(Circuit {
            config: config.clone(),
            seq_len: 2,
            layer: config.n_layers,
            idiom,
            meaning: String::new(),
            corruptions: Vec::new(),
            edges,
            achieved: Vec::new(),
        });
    }
    Ok(circuits)
}
