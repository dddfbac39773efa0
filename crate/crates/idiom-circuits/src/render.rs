// SPDX-License-Identifier: MIT OR Apache-2.0

//! Graphviz DOT rendering of circuits.
//!
//! Visual conventions: embedding nodes are triangles, residual-stream nodes
//! circles, attention heads squares. Retained edges are red for positive
//! effects and blue for negative (antagonistic) ones, with pen width linear
//! in `|d|` and clamped to a documented range. Cross-token edges are
//! labeled `K`, `V`, or `KV` when both are retained between the same
//! endpoints; same-token Query edges are unlabeled. The residual chain
//! (embedding → resid 0 → … → resid L−1 per token) is drawn in a neutral
//! gray and is never patched. Tokens are laid out as columns and layers as
//! rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use idiom_circuits_core::discovery::Circuit;
use idiom_circuits_core::{EdgeType, NodeId};

/// Edge-thickness rule: `penwidth = clamp(|d| * weight_scale, min, max)`.
/// With the defaults, pen width stays linear in `|d|` for effects up to
/// 0.1, so a `|d| = 0.10` edge draws five times as thick as `|d| = 0.02`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub weight_scale: f32,
    pub min_penwidth: f32,
    pub max_penwidth: f32,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            weight_scale: 50.0,
            min_penwidth: 0.5,
            max_penwidth: 5.0,
        }
    }
}

impl RenderStyle {
    pub fn penwidth(&self, d: f32) -> f32 {
        (d.abs() * self.weight_scale).clamp(self.min_penwidth, self.max_penwidth)
    }
}

fn node_name(node: &NodeId) -> String {
    match *node {
        NodeId::Resid { layer: -1, token } => format!("emb_t{}", token),
        NodeId::Resid { layer, token } => format!("resid_l{}_t{}", layer, token),
        NodeId::Head { layer, head, token } => format!("head_l{}_h{}_t{}", layer, head, token),
    }
}

fn escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders a circuit as DOT text. `token_labels`, when given, must have one
/// entry per token and is used to label the embedding column heads;
/// otherwise tokens are labeled by position. Output is deterministic.
pub fn render_graph(circuit: &Circuit, style: &RenderStyle, token_labels: Option<&[String]>) -> String {
    let seq_len = circuit.seq_len;
    // Residual node layers: -1 (embedding) through layer - 1 (the node the
    // metric reads).
    let top = circuit.layer as i32 - 1;
    let mut out = String::from("digraph circuit {\n");
    out.push_str("  rankdir=BT;\n");
    out.push_str("  node [fontsize=10];\n");
    out.push_str("  edge [fontsize=9];\n");

    // Embedding row.
    out.push_str("  { rank=same;");
    for t in 0..seq_len {
        write!(out, " emb_t{};", t).unwrap();
    }
    out.push_str(" }\n");
    for t in 0..seq_len {
        let label = match token_labels {
            Some(labels) => escape(labels[t].trim()),
            None => format!("t{}", t),
        };
        writeln!(
            out,
            "  emb_t{} [shape=triangle, label=\"{}\"];",
            t, label
        )
        .unwrap();
    }

    // Head nodes touched by retained edges, grouped per layer for ranking.
    let mut heads_by_layer: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for node in circuit.head_nodes() {
        if let NodeId::Head { layer, .. } = node {
            heads_by_layer.entry(layer).or_default().push(node);
        }
    }

    // Residual rows and head rows, bottom to top.
    for l in 0..=top {
        if let Some(heads) = heads_by_layer.get(&(l as usize)) {
            out.push_str("  { rank=same;");
            for node in heads {
                write!(out, " {};", node_name(node)).unwrap();
            }
            out.push_str(" }\n");
            for node in heads {
                if let NodeId::Head { layer, head, .. } = node {
                    writeln!(
                        out,
                        "  {} [shape=square, label=\"({},{})\"];",
                        node_name(node),
                        layer,
                        head
                    )
                    .unwrap();
                }
            }
        }
        out.push_str("  { rank=same;");
        for t in 0..seq_len {
            write!(out, " resid_l{}_t{};", l, t).unwrap();
        }
        out.push_str(" }\n");
        for t in 0..seq_len {
            writeln!(out, "  resid_l{}_t{} [shape=circle, label=\"{}\"];", l, t, l).unwrap();
        }
    }

    // Neutral residual chain, one column per token; these edges are shown
    // for completeness but are never patched.
    for t in 0..seq_len {
        let mut prev = format!("emb_t{}", t);
        for l in 0..=top {
            let next = format!("resid_l{}_t{}", l, t);
            writeln!(out, "  {} -> {} [color=gray, penwidth=0.5];", prev, next).unwrap();
            prev = next;
        }
    }

    // Retained edges. K and V between the same endpoints merge into one KV
    // edge; the drawn weight is the larger-magnitude of the two.
    let mut merged: BTreeMap<(NodeId, NodeId), (Vec<EdgeType>, f32)> = BTreeMap::new();
    for (edge, &d) in &circuit.edges {
        let entry = merged
            .entry((edge.src, edge.dst))
            .or_insert_with(|| (Vec::new(), d));
        entry.0.push(edge.etype);
        if d.abs() > entry.1.abs() {
            entry.1 = d;
        }
    }
    for ((src, dst), (etypes, d)) in &merged {
        let color = if *d >= 0.0 { "red" } else { "blue" };
        let label = if etypes.contains(&EdgeType::K) && etypes.contains(&EdgeType::V) {
            "KV"
        } else if etypes.contains(&EdgeType::K) {
            "K"
        } else if etypes.contains(&EdgeType::V) {
            "V"
        } else {
            // Query and HeadOut edges are unambiguous and carry no label.
            ""
        };
        let mut attrs = format!("color={}, penwidth={:.2}", color, style.penwidth(*d));
        if !label.is_empty() {
            write!(attrs, ", label=\"{}\"", label).unwrap();
        }
        writeln!(
            out,
            "  {} -> {} [{}];",
            node_name(src),
            node_name(dst),
            attrs
        )
        .unwrap();
    }

    out.push_str("}\n");
    out
}
