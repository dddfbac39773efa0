// SPDX-License-Identifier: MIT OR Apache-2.0

//! The greedy edge-pruning loop, threshold sweeps, circuit merging and
//! interpretability pruning.
//!
//! Starting from the full edge universe (truncated at the experiment layer),
//! nodes are visited output-to-input; each incoming edge is tentatively
//! patched on top of everything already removed, and removed permanently
//! when the metric change `d` stays within the threshold. Edges with
//! `|d| > tau` are retained with their signed weight, including
//! antagonistic edges (`d < -tau`) that suppress the figurative reading.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::experiment::ExperimentSpec;
use crate::graph::{build_graph, CircuitGraph, EdgeId, EdgeType, NodeId, PatchSet};
use crate::model::{forward, layer_cosine, tokenize, ActivationCache, ModelConfig, Vocab, Weights};
use crate::patching::forward_with_patches;

/// The discovery metric: final-token cosine between the patched run and the
/// meaning run at resid index `layer`.
pub fn metric(
    patched: &ActivationCache,
    meaning: &ActivationCache,
    layer: usize,
) -> Result<f32, CoreError> {
    layer_cosine(patched, meaning, layer)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionRecord {
    pub string: String,
    pub position: usize,
    pub tau: f32,
}

/// Achieved metric values recorded per contributing corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct AchievedCosine {
    pub corruption: String,
    /// cos θ between the circuit (everything else patched) and the meaning.
    pub full: f32,
    /// Same metric for the pruned circuit, once evaluated.
    pub pruned: Option<f32>,
}

/// A retained-edge subgraph with signed effect weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub config: ModelConfig,
    pub seq_len: usize,
    /// Metric layer `L` (resid index); head layers `0..L` are in the universe.
    pub layer: usize,
    pub idiom: String,
    pub meaning: String,
    pub corruptions: Vec<CorruptionRecord>,
    pub edges: BTreeMap<EdgeId, f32>,
    pub achieved: Vec<AchievedCosine>,
}

impl Circuit {
    pub fn graph(&self) -> Result<CircuitGraph, CoreError> {
        build_graph(&self.config, self.seq_len, self.layer - 1)
    }

    /// Head nodes touched by any retained edge.
    pub fn head_nodes(&self) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = self.edges.keys().map(|e| e.head_node()).collect();
        nodes.sort();
        nodes.dedup();
        nodes
    }

    fn compatible_with(&self, other: &Circuit) -> Result<(), CoreError> {
        if self.config != other.config
            || self.seq_len != other.seq_len
            || self.layer != other.layer
            || self.idiom != other.idiom
        {
            return Err(CoreError::IncompatibleCircuits(
                "circuits must share model config, sequence length, layer and idiom".to_string(),
            ));
        }
        Ok(())
    }
}

struct DiscoveryRun<'a> {
    weights: &'a Weights,
    graph: CircuitGraph,
    idiom_tokens: crate::model::TokenSequence,
    corrupt_cache: ActivationCache,
    meaning_cache: ActivationCache,
    layer: usize,
}

impl<'a> DiscoveryRun<'a> {
    fn prepare(
        weights: &'a Weights,
        vocab: &Vocab,
        spec: &ExperimentSpec,
        corruption_index: usize,
    ) -> Result<Self, CoreError> {
        let n_layers = weights.config.n_layers;
        if spec.layer == 0 || spec.layer > n_layers {
            return Err(CoreError::LayerOutOfRange {
                layer: spec.layer,
                max: n_layers,
            });
        }
        let (idiom_tokens, corrupt_tokens) = spec.tokenized_pair(corruption_index, vocab)?;
        let meaning_tokens = tokenize(&spec.meaning, vocab)?;
        let corrupt_cache = forward(weights, &corrupt_tokens)?;
        let meaning_cache = forward(weights, &meaning_tokens)?;
        let graph = build_graph(&weights.config, idiom_tokens.len(), spec.layer - 1)?;
        Ok(DiscoveryRun {
            weights,
            graph,
            idiom_tokens,
            corrupt_cache,
            meaning_cache,
            layer: spec.layer,
        })
    }

    fn eval(&self, patches: &PatchSet) -> Result<f32, CoreError> {
        let cache = forward_with_patches(
            self.weights,
            &self.idiom_tokens,
            &self.corrupt_cache,
            patches,
            self.graph.max_layer,
        )?;
        metric(&cache, &self.meaning_cache, self.layer)
    }
}

/// Runs the pruning loop for one corruption at threshold `tau`.
pub fn discover_circuit(
    weights: &Weights,
    vocab: &Vocab,
    spec: &ExperimentSpec,
    corruption_index: usize,
    tau: f32,
) -> Result<Circuit, CoreError> {
    if tau <= 0.0 {
        return Err(CoreError::InvalidExperiment(
            "tau must be positive".to_string(),
        ));
    }
    let run = DiscoveryRun::prepare(weights, vocab, spec, corruption_index)?;
    let corruption = &spec.corruptions[corruption_index];

    let mut removed: PatchSet = PatchSet::new();
    let mut retained: BTreeMap<EdgeId, f32> = BTreeMap::new();
    let mut baseline = run.eval(&removed)?;
    for node in run.graph.reverse_topological_order() {
        for edge in run.graph.incoming_edges(&node) {
            removed.insert(edge);
            let candidate = run.eval(&removed)?;
            let d = baseline - candidate;
            if d.abs() <= tau {
                baseline = candidate;
            } else {
                removed.remove(&edge);
                retained.insert(edge, d);
            }
        }
    }

    Ok(Circuit {
        config: weights.config.clone(),
        seq_len: run.idiom_tokens.len(),
        layer: run.layer,
        idiom: spec.idiom.clone(),
        meaning: spec.meaning.clone(),
        corruptions: alloc::vec![CorruptionRecord {
            string: corruption.string.clone(),
            position: corruption.position,
            tau,
        }],
        edges: retained,
        achieved: alloc::vec![AchievedCosine {
            corruption: corruption.string.clone(),
            full: baseline,
            pruned: None,
        }],
    })
}

/// Single-edge effects `d(e) = metric(∅) - metric({e})` for every edge in
/// the truncated universe, using the engine's patched forward. This is the
/// discovery loop's first-node evaluation, exposed for oracle agreement
/// checks.
pub fn single_edge_effects(
    weights: &Weights,
    vocab: &Vocab,
    spec: &ExperimentSpec,
    corruption_index: usize,
) -> Result<BTreeMap<EdgeId, f32>, CoreError> {
    let run = DiscoveryRun::prepare(weights, vocab, spec, corruption_index)?;
    let base = run.eval(&PatchSet::new())?;
    let mut out = BTreeMap::new();
    for edge in run.graph.edges() {
        let mut patches = PatchSet::new();
        patches.insert(edge);
        out.insert(edge, base - run.eval(&patches)?);
    }
    Ok(out)
}

/// Metric achieved by a retained edge set: everything outside it is patched.
pub fn evaluate_circuit(
    weights: &Weights,
    vocab: &Vocab,
    spec: &ExperimentSpec,
    corruption_index: usize,
    circuit: &Circuit,
) -> Result<f32, CoreError> {
    let run = DiscoveryRun::prepare(weights, vocab, spec, corruption_index)?;
    let patches: PatchSet = run
        .graph
        .edges()
        .into_iter()
        .filter(|e| !circuit.edges.contains_key(e))
        .collect();
    run.eval(&patches)
}

/// τ grid with per-τ edge counts and achieved metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: Vec<f32>,
    pub edge_counts: Vec<usize>,
    pub cosines: Vec<f32>,
    pub circuits: Vec<Circuit>,
}

/// One independent discovery run per grid point. The grid must be strictly
/// ascending and positive; per-τ results are not nested, so nothing is
/// reused across points.
pub fn threshold_sweep(
    weights: &Weights,
    vocab: &Vocab,
    spec: &ExperimentSpec,
    corruption_index: usize,
    grid: &[f32],
) -> Result<SweepResult, CoreError> {
    validate_grid(grid)?;
    let mut edge_counts = Vec::with_capacity(grid.len());
    let mut cosines = Vec::with_capacity(grid.len());
    let mut circuits = Vec::with_capacity(grid.len());
    for &tau in grid {
        let circuit = discover_circuit(weights, vocab, spec, corruption_index, tau)?;
        edge_counts.push(circuit.edges.len());
        cosines.push(circuit.achieved[0].full);
        circuits.push(circuit);
    }
    Ok(SweepResult {
        grid: grid.to_vec(),
        edge_counts,
        cosines,
        circuits,
    })
}

fn validate_grid(grid: &[f32]) -> Result<(), CoreError> {
    if grid.is_empty() || grid[0] <= 0.0 {
        return Err(CoreError::GridNotAscending);
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(CoreError::GridNotAscending);
        }
    }
    Ok(())
}

/// Typical optimal threshold range; suggestions outside it carry an advisory.
pub const TYPICAL_TAU_RANGE: (f32, f32) = (0.004, 0.008);

/// A jump is an adjacent-τ edge-count ratio at or above this.
pub const JUMP_RATIO: f64 = 1.5;

/// Max absolute log-linear fit residual for the low-τ exponential tail.
pub const TAIL_FIT_RESIDUAL: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct TauSuggestion {
    pub tau_star: f32,
    pub flags: Vec<String>,
}

/// Heuristic threshold suggestion from a sweep's edge counts.
///
/// The low-τ exponential tail is detected by greedily extending a
/// log-linear fit while its max residual stays below
/// [`TAIL_FIT_RESIDUAL`]; the first count ratio >= [`JUMP_RATIO`] at or
/// after the tail end is the topology jump. τ* is the midpoint of the
/// largest grid gap between the two (ties toward the jump). Always advises
/// manual confirmation.
pub fn suggest_threshold_from(grid: &[f32], counts: &[usize]) -> Result<TauSuggestion, CoreError> {
    if grid.len() < 4 {
        return Err(CoreError::TooFewPoints {
            needed: 4,
            got: grid.len(),
        });
    }
    if grid.len() != counts.len() {
        return Err(CoreError::TooFewPoints {
            needed: grid.len(),
            got: counts.len(),
        });
    }
    validate_grid(grid)?;
    let mut flags: Vec<String> = Vec::new();

    let ln_counts: Vec<f64> = counts.iter().map(|&c| libm::log(c.max(1) as f64)).collect();
    let taus: Vec<f64> = grid.iter().map(|&t| t as f64).collect();

    // Greedy exponential-tail extension.
    let mut tail_end: usize = 0;
    if fit_max_residual(&taus[..3], &ln_counts[..3]) < TAIL_FIT_RESIDUAL {
        tail_end = 2;
        while tail_end + 1 < grid.len()
            && fit_max_residual(&taus[..tail_end + 2], &ln_counts[..tail_end + 2])
                < TAIL_FIT_RESIDUAL
        {
            tail_end += 1;
        }
    } else {
        flags.push("no exponential tail detected".to_string());
    }

    // Count ratios at or after the tail end.
    let mut jumps: Vec<usize> = Vec::new();
    for i in tail_end..counts.len() - 1 {
        let ratio = if counts[i + 1] == 0 {
            if counts[i] == 0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            counts[i] as f64 / counts[i + 1] as f64
        };
        if ratio >= JUMP_RATIO {
            jumps.push(i);
        }
    }

    let tau_star = match jumps.first() {
        None => {
            flags.push("no topology jump detected".to_string());
            grid[(grid.len() - 1) / 2]
        }
        Some(&jump) => {
            if jumps.len() > 1 {
                flags.push("multiple jumps detected".to_string());
            }
            // Largest inter-point gap in [tail_end, jump + 1]; widths equal
            // up to float noise count as ties, resolved toward the jump.
            let mut best = tail_end.min(jump);
            let mut best_width = 0.0f32;
            for m in tail_end.min(jump)..=jump {
                let width = grid[m + 1] - grid[m];
                if width >= best_width * (1.0 - 1e-5) {
                    best_width = best_width.max(width);
                    best = m;
                }
            }
            0.5 * (grid[best] + grid[best + 1])
        }
    };

    if tau_star < TYPICAL_TAU_RANGE.0 || tau_star > TYPICAL_TAU_RANGE.1 {
        flags.push(format!(
            "tau* {:.4} outside typical range {:.3}-{:.3}",
            tau_star, TYPICAL_TAU_RANGE.0, TYPICAL_TAU_RANGE.1
        ));
    }
    flags.push("manual confirmation advised".to_string());
    Ok(TauSuggestion { tau_star, flags })
}

pub fn suggest_threshold(sweep: &SweepResult) -> Result<TauSuggestion, CoreError> {
    suggest_threshold_from(&sweep.grid, &sweep.edge_counts)
}

fn fit_max_residual(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        var += (x - mx) * (x - mx);
    }
    let slope = if var == 0.0 { 0.0 } else { cov / var };
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (y - (my + slope * (x - mx))).abs())
        .fold(0.0, f64::max)
}

/// Union of retained edges; each merged weight is the input weight of
/// maximum magnitude, sign preserved.
pub fn merge_circuits(circuits: &[Circuit]) -> Result<Circuit, CoreError> {
    let first = circuits
        .first()
        .ok_or_else(|| CoreError::IncompatibleCircuits("no circuits to merge".to_string()))?;
    let mut merged = first.clone();
    for other in &circuits[1..] {
        first.compatible_with(other)?;
        for (&edge, &d) in &other.edges {
            merged
                .edges
                .entry(edge)
                .and_modify(|w| {
                    if d.abs() > w.abs() {
                        *w = d;
                    }
                })
                .or_insert(d);
        }
        for rec in &other.corruptions {
            if !merged.corruptions.iter().any(|r| r == rec) {
                merged.corruptions.push(rec.clone());
            }
        }
        for ach in &other.achieved {
            if !merged.achieved.iter().any(|a| a == ach) {
                merged.achieved.push(ach.clone());
            }
        }
    }
    Ok(merged)
}

/// Interpretability pruning: iteratively drops every head whose retained
/// incoming edges are empty or consist solely of its Query edge, together
/// with that head's outgoing HeadOut edges, until a fixpoint. Residual
/// nodes are never removed.
pub fn prune_circuit(merged: &Circuit) -> Circuit {
    let mut pruned = merged.clone();
    for ach in &mut pruned.achieved {
        ach.pruned = None;
    }
    loop {
        let heads = pruned.head_nodes();
        let mut to_remove: Vec<NodeId> = Vec::new();
        for head in heads {
            let incoming: Vec<&EdgeId> = pruned
                .edges
                .keys()
                .filter(|e| e.dst == head)
                .collect();
            if incoming.is_empty() || incoming.iter().all(|e| e.etype == EdgeType::Q) {
                to_remove.push(head);
            }
        }
        if to_remove.is_empty() {
            break;
        }
        pruned
            .edges
            .retain(|e, _| !to_remove.contains(&e.head_node()));
    }
    pruned
}
