// SPDX-License-Identifier: MIT OR Apache-2.0

//! The shared forward engine.
//!
//! A plain forward pass and a patched pass run the identical arithmetic;
//! patching only swaps which residual vector feeds a given Q/K/V projection
//! or which head output is added to the stream. This keeps the empty-patch
//! identity exact (bit-identical caches) by construction of the code path.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::graph::{EdgeId, PatchSet};
use crate::math::{dot, gelu, layer_norm, rms_norm, rotary_inplace, softmax_inplace, Mat};
use crate::model::{
    ActivationCache, LayerCache, ModelConfig, NormKind, PositionalKind, TokenSequence, Weights,
};

pub(crate) struct PatchContext<'a> {
    pub corrupt: &'a ActivationCache,
    pub patches: &'a PatchSet,
}

fn norm_row(config: &ModelConfig, x: &[f32], scale: &[f32]) -> Vec<f32> {
    match config.norm_kind {
        NormKind::Rms => rms_norm(x, scale),
        NormKind::Layer => layer_norm(x, scale),
    }
}

/// Computes blocks `0..=max_layer`. Logits are filled only when the pass
/// reaches the final block.
pub(crate) fn run_forward(
    weights: &Weights,
    tokens: &TokenSequence,
    patch: Option<PatchContext<'_>>,
    max_layer: usize,
    compute_logits: bool,
) -> Result<ActivationCache, CoreError> {
    let c = &weights.config;
    let t_len = tokens.len();
    if t_len == 0 || t_len > c.max_seq {
        return Err(CoreError::SequenceTooLong {
            len: t_len,
            max: c.max_seq,
        });
    }
    for &id in &tokens.ids {
        if id >= c.vocab_size {
            return Err(CoreError::TokenOutOfRange {
                id,
                vocab_size: c.vocab_size,
            });
        }
    }
    if max_layer >= c.n_layers {
        return Err(CoreError::LayerOutOfRange {
            layer: max_layer,
            max: c.n_layers - 1,
        });
    }
    if let Some(ctx) = &patch {
        if ctx.corrupt.seq_len() != t_len {
            return Err(CoreError::LengthMismatch {
                clean: t_len,
                corrupt: ctx.corrupt.seq_len(),
            });
        }
        // Substitutions read corrupt resid[l] and corrupt head outputs of
        // every computed layer.
        if ctx.corrupt.layers.len() < max_layer + 1 {
            return Err(CoreError::LayerOutOfRange {
                layer: max_layer,
                max: ctx.corrupt.layers.len().saturating_sub(1),
            });
        }
    }

    let rotary = c.positional_kind == PositionalKind::Rotary;
    let inv_sqrt_dh = 1.0 / libm::sqrtf(c.d_head as f32);

    let mut resid0 = Mat::zeros(t_len, c.d_model);
    for t in 0..t_len {
        let emb = weights.token_embedding.row(tokens.ids[t]);
        let row = resid0.row_mut(t);
        row.copy_from_slice(emb);
        if let Some(pos) = &weights.pos_embedding {
            for (r, p) in row.iter_mut().zip(pos.row(t)) {
                *r += p;
            }
        }
    }

    let mut resids = vec![resid0];
    let mut layer_caches: Vec<LayerCache> = Vec::with_capacity(max_layer + 1);

    for l in 0..=max_layer {
        let block = &weights.blocks[l];
        let running = &resids[l];

        // Pre-attention norm of the running stream.
        let normed: Vec<Vec<f32>> = (0..t_len)
            .map(|t| norm_row(c, running.row(t), &block.norm1_scale))
            .collect();

        // Base Q/K/V from the running stream (post-rotary).
        let mut base_q: Vec<Mat> = Vec::with_capacity(c.n_heads);
        let mut base_k: Vec<Mat> = Vec::with_capacity(c.n_heads);
        let mut base_v: Vec<Mat> = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let mut qm = Mat::zeros(t_len, c.d_head);
            let mut km = Mat::zeros(t_len, c.d_head);
            let mut vm = Mat::zeros(t_len, c.d_head);
            for t in 0..t_len {
                let mut q = block.attn.w_q[h].vec_mul(&normed[t]);
                let mut k = block.attn.w_k[h].vec_mul(&normed[t]);
                let v = block.attn.w_v[h].vec_mul(&normed[t]);
                if rotary {
                    rotary_inplace(&mut q, t);
                    rotary_inplace(&mut k, t);
                }
                qm.row_mut(t).copy_from_slice(&q);
                km.row_mut(t).copy_from_slice(&k);
                vm.row_mut(t).copy_from_slice(&v);
            }
            base_q.push(qm);
            base_k.push(km);
            base_v.push(vm);
        }

        // Corrupt-side projections, computed lazily per patched edge so a
        // patched pass costs one extra projection per substituted edge.
        let mut corrupt_normed: BTreeMap<usize, Vec<f32>> = BTreeMap::new();
        let mut corrupt_q: BTreeMap<(usize, usize), Vec<f32>> = BTreeMap::new();
        let mut corrupt_k: BTreeMap<(usize, usize), Vec<f32>> = BTreeMap::new();
        let mut corrupt_v: BTreeMap<(usize, usize), Vec<f32>> = BTreeMap::new();
        if let Some(ctx) = &patch {
            let corrupt_resid = &ctx.corrupt.resid[l];
            let normed_of = |t: usize, map: &mut BTreeMap<usize, Vec<f32>>| {
                map.entry(t)
                    .or_insert_with(|| norm_row(c, corrupt_resid.row(t), &block.norm1_scale))
                    .clone()
            };
            for e in ctx.patches.iter() {
                let (el, eh) = e.layer_head();
                if el != l {
                    continue;
                }
                match e.etype {
                    crate::graph::EdgeType::Q => {
                        let t = e.dst.token();
                        let x = normed_of(t, &mut corrupt_normed);
                        let mut q = block.attn.w_q[eh].vec_mul(&x);
                        if rotary {
                            rotary_inplace(&mut q, t);
                        }
                        corrupt_q.insert((eh, t), q);
                    }
                    crate::graph::EdgeType::K => {
                        let s = e.src.token();
                        let x = normed_of(s, &mut corrupt_normed);
                        let mut k = block.attn.w_k[eh].vec_mul(&x);
                        if rotary {
                            rotary_inplace(&mut k, s);
                        }
                        corrupt_k.insert((eh, s), k);
                    }
                    crate::graph::EdgeType::V => {
                        let s = e.src.token();
                        let x = normed_of(s, &mut corrupt_normed);
                        corrupt_v.insert((eh, s), block.attn.w_v[eh].vec_mul(&x));
                    }
                    crate::graph::EdgeType::HeadOut => {}
                }
            }
        }

        let is_patched = |e: &EdgeId| patch.as_ref().is_some_and(|ctx| ctx.patches.contains(e));

        let mut patterns: Vec<Mat> = Vec::with_capacity(c.n_heads);
        let mut head_outs: Vec<Mat> = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let mut pattern = Mat::zeros(t_len, t_len);
            let mut head_out = Mat::zeros(t_len, c.d_model);
            for dst in 0..t_len {
                // A patched Q edge replaces the query for attention to
                // previous tokens only; the diagonal score keeps the
                // running-stream query.
                let q_sub = if is_patched(&EdgeId::q(l, h, dst)) {
                    corrupt_q.get(&(h, dst))
                } else {
                    None
                };
                let mut scores = vec![0.0f32; dst + 1];
                for (j, score) in scores.iter_mut().enumerate() {
                    let q = match q_sub {
                        Some(q) if j < dst => q.as_slice(),
                        _ => base_q[h].row(dst),
                    };
                    let k = if j < dst && is_patched(&EdgeId::k(l, h, j, dst)) {
                        corrupt_k[&(h, j)].as_slice()
                    } else {
                        base_k[h].row(j)
                    };
                    *score = dot(q, k) * inv_sqrt_dh;
                }
                softmax_inplace(&mut scores);
                pattern.row_mut(dst)[..=dst].copy_from_slice(&scores);

                let mut mixed = vec![0.0f32; c.d_head];
                for (j, &p) in scores.iter().enumerate() {
                    let v = if j < dst && is_patched(&EdgeId::v(l, h, j, dst)) {
                        corrupt_v[&(h, j)].as_slice()
                    } else {
                        base_v[h].row(j)
                    };
                    for (m, &vv) in mixed.iter_mut().zip(v) {
                        *m += p * vv;
                    }
                }
                let out_row = if is_patched(&EdgeId::head_out(l, h, dst)) {
                    let ctx = patch.as_ref().unwrap();
                    ctx.corrupt.layers[l].head_out[h].row(dst).to_vec()
                } else {
                    block.attn.w_o[h].vec_mul(&mixed)
                };
                head_out.row_mut(dst).copy_from_slice(&out_row);
            }
            patterns.push(pattern);
            head_outs.push(head_out);
        }

        // Residual add, then the MLP sublayer on the running stream.
        let mut resid_mid = running.clone();
        for h in 0..c.n_heads {
            for t in 0..t_len {
                let src = head_outs[h].row(t);
                let dst_row = resid_mid.row_mut(t);
                for (d, &s) in dst_row.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut mlp_out = Mat::zeros(t_len, c.d_model);
        for t in 0..t_len {
            let y = norm_row(c, resid_mid.row(t), &block.norm2_scale);
            let mut hidden = block.mlp.w_in.vec_mul(&y);
            for (hv, &b) in hidden.iter_mut().zip(&block.mlp.b_in) {
                *hv = gelu(*hv + b);
            }
            let mut out = block.mlp.w_out.vec_mul(&hidden);
            for (ov, &b) in out.iter_mut().zip(&block.mlp.b_out) {
                *ov += b;
            }
            mlp_out.row_mut(t).copy_from_slice(&out);
        }
        let mut resid_next = resid_mid;
        for t in 0..t_len {
            let row = resid_next.row_mut(t);
            for (r, &m) in row.iter_mut().zip(mlp_out.row(t)) {
                *r += m;
            }
        }

        layer_caches.push(LayerCache {
            q: base_q,
            k: base_k,
            v: base_v,
            pattern: patterns,
            head_out: head_outs,
            mlp_out,
        });
        resids.push(resid_next);
    }

    let logits = if compute_logits && max_layer + 1 == c.n_layers {
        let last = &resids[c.n_layers];
        let mut lg = Mat::zeros(t_len, c.vocab_size);
        for t in 0..t_len {
            let row = weights.unembedding.vec_mul(last.row(t));
            lg.row_mut(t).copy_from_slice(&row);
        }
        Some(lg)
    } else {
        None
    };

    Ok(ActivationCache {
        resid: resids,
        layers: layer_caches,
        logits,
    })
}
