// SPDX-License-Identifier: MIT OR Apache-2.0

//! Node/edge universe for circuit discovery.
//!
//! Nodes are attention heads and post-MLP residual streams, per token.
//! Resid layer `-1` denotes the embedding output. Incoming edges of a head
//! are its Query edge (same token), Key and Value edges (strictly earlier
//! source tokens), and each head writes one HeadOut edge into its layer's
//! residual node. Residual-to-residual carries exist implicitly and are
//! never patched.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::CoreError;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    /// Post-MLP residual stream of `layer` at `token`; layer −1 is the
    /// embedding output.
    Resid { layer: i32, token: usize },
    /// Attention head `head` of block `layer` at destination `token`.
    Head {
        layer: usize,
        head: usize,
        token: usize,
    },
}

impl NodeId {
    pub fn token(&self) -> usize {
        match *self {
            NodeId::Resid { token, .. } | NodeId::Head { token, .. } => token,
        }
    }

    /// Layer key used for topological comparison: a Resid node sits after
    /// the heads of the same layer.
    fn layer_key(&self) -> i32 {
        match *self {
            NodeId::Resid { layer, .. } => layer,
            NodeId::Head { layer, .. } => layer as i32,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NodeId::Resid { layer, token } => write!(f, "resid[{}]@{}", layer, token),
            NodeId::Head { layer, head, token } => write!(f, "head[{},{}]@{}", layer, head, token),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    Q,
    K,
    V,
    HeadOut,
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EdgeType::Q => "Q",
            EdgeType::K => "K",
            EdgeType::V => "V",
            EdgeType::HeadOut => "HeadOut",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    pub src: NodeId,
    pub dst: NodeId,
    pub etype: EdgeType,
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}->{}", self.etype, self.src, self.dst)
    }
}

impl EdgeId {
    pub fn q(layer: usize, head: usize, token: usize) -> Self {
        EdgeId {
            src: NodeId::Resid {
                layer: layer as i32 - 1,
                token,
            },
            dst: NodeId::Head { layer, head, token },
            etype: EdgeType::Q,
        }
    }

    pub fn k(layer: usize, head: usize, src_token: usize, dst_token: usize) -> Self {
        EdgeId {
            src: NodeId::Resid {
                layer: layer as i32 - 1,
                token: src_token,
            },
            dst: NodeId::Head {
                layer,
                head,
                token: dst_token,
            },
            etype: EdgeType::K,
        }
    }

    pub fn v(layer: usize, head: usize, src_token: usize, dst_token: usize) -> Self {
        EdgeId {
            src: NodeId::Resid {
                layer: layer as i32 - 1,
                token: src_token,
            },
            dst: NodeId::Head {
                layer,
                head,
                token: dst_token,
            },
            etype: EdgeType::V,
        }
    }

    pub fn head_out(layer: usize, head: usize, token: usize) -> Self {
        EdgeId {
            src: NodeId::Head { layer, head, token },
            dst: NodeId::Resid {
                layer: layer as i32,
                token,
            },
            etype: EdgeType::HeadOut,
        }
    }

    /// The head node this edge touches.
    pub fn head_node(&self) -> NodeId {
        match self.etype {
            EdgeType::HeadOut => self.src,
            _ => self.dst,
        }
    }

    /// `(layer, head)` of the head node this edge touches.
    pub fn layer_head(&self) -> (usize, usize) {
        match self.head_node() {
            NodeId::Head { layer, head, .. } => (layer, head),
            NodeId::Resid { .. } => unreachable!("every edge touches a head node"),
        }
    }
}

/// Edge sets handed to the patched forward pass.
pub type PatchSet = BTreeSet<EdgeId>;

/// The full node set and edge universe for a model at one sequence length,
/// truncated at `max_layer` (inclusive head layer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitGraph {
    pub n_heads: usize,
    pub seq_len: usize,
    pub max_layer: usize,
}

/// Enumerates the edge universe for `config` at sequence length `t`,
/// keeping head layers `0..=max_layer`.
pub fn build_graph(
    config: &ModelConfig,
    t: usize,
    max_layer: usize,
) -> Result<CircuitGraph, CoreError> {
    if t == 0 || t > config.max_seq {
        return Err(CoreError::SequenceTooLong {
            len: t,
            max: config.max_seq,
        });
    }
    if max_layer >= config.n_layers {
        return Err(CoreError::LayerOutOfRange {
            layer: max_layer,
            max: config.n_layers - 1,
        });
    }
    Ok(CircuitGraph {
        n_heads: config.n_heads,
        seq_len: t,
        max_layer,
    })
}

impl CircuitGraph {
    pub fn contains(&self, edge: &EdgeId) -> bool {
        let (layer, head, dst_token) = match edge.dst {
            NodeId::Head { layer, head, token } => (layer, head, token),
            NodeId::Resid { layer, token } => {
                // Only HeadOut edges end at a residual node.
                if edge.etype != EdgeType::HeadOut {
                    return false;
                }
                match edge.src {
                    NodeId::Head {
                        layer: sl,
                        head,
                        token: st,
                    } => {
                        return sl <= self.max_layer
                            && head < self.n_heads
                            && st < self.seq_len
                            && layer == sl as i32
                            && token == st;
                    }
                    NodeId::Resid { .. } => return false,
                }
            }
        };
        if layer > self.max_layer || head >= self.n_heads || dst_token >= self.seq_len {
            return false;
        }
        match edge.src {
            NodeId::Resid {
                layer: sl,
                token: st,
            } => {
                if sl != layer as i32 - 1 {
                    return false;
                }
                match edge.etype {
                    EdgeType::Q => st == dst_token,
                    EdgeType::K | EdgeType::V => st < dst_token,
                    EdgeType::HeadOut => false,
                }
            }
            NodeId::Head { .. } => false,
        }
    }

    pub fn validate_patch_set(&self, patches: &PatchSet) -> Result<(), CoreError> {
        for e in patches {
            if !self.contains(e) {
                return Err(CoreError::EdgeOutsideUniverse(edge_string(e)));
            }
        }
        Ok(())
    }

    /// All edges, in the deterministic per-node evaluation order
    /// (nodes in reverse topological order; per node HeadOut, Q, K, V).
    pub fn edges(&self) -> Vec<EdgeId> {
        let mut out = Vec::new();
        for node in self.reverse_topological_order() {
            out.extend(self.incoming_edges(&node));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        let t = self.seq_len;
        let layers = self.max_layer + 1;
        let per_head_q = t;
        let per_head_out = t;
        let per_head_kv = t * (t - 1); // K and V each t*(t-1)/2
        layers * self.n_heads * (per_head_q + per_head_out + per_head_kv)
    }

    /// Node list sorted output-to-input: layer descending, token descending,
    /// Resid before Head, head index ascending.
    pub fn reverse_topological_order(&self) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = Vec::new();
        for t in 0..self.seq_len {
            nodes.push(NodeId::Resid {
                layer: -1,
                token: t,
            });
        }
        for layer in 0..=self.max_layer {
            for t in 0..self.seq_len {
                nodes.push(NodeId::Resid {
                    layer: layer as i32,
                    token: t,
                });
                for head in 0..self.n_heads {
                    nodes.push(NodeId::Head {
                        layer,
                        head,
                        token: t,
                    });
                }
            }
        }
        nodes.sort_by(compare_reverse_topological);
        nodes
    }

    /// Incoming patchable edges of a node, in evaluation order:
    /// HeadOut, then Q, then K, then V; within a type by ascending source
    /// token, source layer, head index.
    pub fn incoming_edges(&self, node: &NodeId) -> Vec<EdgeId> {
        let mut out = Vec::new();
        match *node {
            NodeId::Resid { layer, token } => {
                if layer >= 0 {
                    let layer = layer as usize;
                    for head in 0..self.n_heads {
                        out.push(EdgeId::head_out(layer, head, token));
                    }
                }
            }
            NodeId::Head { layer, head, token } => {
                out.push(EdgeId::q(layer, head, token));
                for src in 0..token {
                    out.push(EdgeId::k(layer, head, src, token));
                }
                for src in 0..token {
                    out.push(EdgeId::v(layer, head, src, token));
                }
            }
        }
        out
    }
}

fn compare_reverse_topological(a: &NodeId, b: &NodeId) -> Ordering {
    // Higher layer first, then higher token, then Resid before Head,
    // then ascending head index.
    b.layer_key()
        .cmp(&a.layer_key())
        .then(b.token().cmp(&a.token()))
        .then_with(|| {
            let rank = |n: &NodeId| match n {
                NodeId::Resid { .. } => 0u8,
                NodeId::Head { .. } => 1u8,
            };
            rank(a).cmp(&rank(b))
        })
        .then_with(|| {
            let head = |n: &NodeId| match n {
                NodeId::Head { head, .. } => *head,
                NodeId::Resid { .. } => 0,
            };
            head(a).cmp(&head(b))
        })
}

pub(crate) fn edge_string(e: &EdgeId) -> String {
    format!("{}", e)
}
