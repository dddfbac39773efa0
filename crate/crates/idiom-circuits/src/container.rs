// SPDX-License-Identifier: MIT OR Apache-2.0

//! The tensor container format.
//!
//! Layout: an 8-byte little-endian unsigned integer giving the byte length
//! of a UTF-8 JSON header, the header itself, then raw little-endian `f32`
//! data. The header maps tensor names to `{dtype, shape, offset, length}`
//! (offsets relative to the start of the data section) and carries the
//! architecture under the reserved `__config__` key.
//!
//! Tensor naming scheme:
//! - `token_embedding` — `[vocab_size, d_model]`
//! - `pos_embedding` — `[max_seq, d_model]`, present only for learned
//!   positional encodings
//! - `blocks.{l}.norm1.scale`, `blocks.{l}.norm2.scale` — `[d_model]`
//! - `blocks.{l}.attn.W_Q` / `W_K` / `W_V` — `[n_heads, d_model, d_head]`
//! - `blocks.{l}.attn.W_O` — `[n_heads, d_head, d_model]`
//! - `blocks.{l}.mlp.W_in` — `[d_model, d_mlp]`, `b_in` — `[d_mlp]`
//! - `blocks.{l}.mlp.W_out` — `[d_mlp, d_model]`, `b_out` — `[d_model]`
//! - `unembedding` — `[d_model, vocab_size]`

use std::collections::BTreeMap;
use std::path::Path;

use idiom_circuits_core::math::Mat;
use idiom_circuits_core::model::{AttnWeights, BlockWeights, MlpWeights};
use idiom_circuits_core::{ModelConfig, NormKind, PositionalKind, Weights};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, FormatError};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ConfigHeader {
    n_layers: usize,
    n_heads: usize,
    d_model: usize,
    d_head: usize,
    d_mlp: usize,
    vocab_size: usize,
    max_seq: usize,
    norm_kind: String,
    positional_kind: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "__config__")]
    config: ConfigHeader,
    #[serde(flatten)]
    tensors: BTreeMap<String, TensorEntry>,
}

pub(crate) fn config_to_header(c: &ModelConfig) -> ConfigHeader {
    ConfigHeader {
        n_layers: c.n_layers,
        n_heads: c.n_heads,
        d_model: c.d_model,
        d_head: c.d_head,
        d_mlp: c.d_mlp,
        vocab_size: c.vocab_size,
        max_seq: c.max_seq,
        norm_kind: match c.norm_kind {
            NormKind::Rms => "rms".into(),
            NormKind::Layer => "layer".into(),
        },
        positional_kind: match c.positional_kind {
            PositionalKind::Learned => "learned".into(),
            PositionalKind::Rotary => "rotary".into(),
            PositionalKind::None => "none".into(),
        },
    }
}

pub(crate) fn config_from_header(h: &ConfigHeader) -> Result<ModelConfig, FormatError> {
    let norm_kind = match h.norm_kind.as_str() {
        "rms" => NormKind::Rms,
        "layer" => NormKind::Layer,
        other => {
            return Err(FormatError::MalformedHeader(format!(
                "unknown norm_kind `{}`",
                other
            )))
        }
    };
    let positional_kind = match h.positional_kind.as_str() {
        "learned" => PositionalKind::Learned,
        "rotary" => PositionalKind::Rotary,
        "none" => PositionalKind::None,
        other => {
            return Err(FormatError::MalformedHeader(format!(
                "unknown positional_kind `{}`",
                other
            )))
        }
    };
    Ok(ModelConfig {
        n_layers: h.n_layers,
        n_heads: h.n_heads,
        d_model: h.d_model,
        d_head: h.d_head,
        d_mlp: h.d_mlp,
        vocab_size: h.vocab_size,
        max_seq: h.max_seq,
        norm_kind,
        positional_kind,
    })
}

/// In-memory tensor inventory, keyed by name; sorted keys give the on-disk
/// data layout, so identical weights always serialize to identical bytes.
type Inventory = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

fn collect_tensors(weights: &Weights) -> Inventory {
    let c = &weights.config;
    let mut inv: Inventory = BTreeMap::new();
    inv.insert(
        "token_embedding".into(),
        (
            vec![c.vocab_size, c.d_model],
            weights.token_embedding.data().to_vec(),
        ),
    );
    if let Some(pos) = &weights.pos_embedding {
        inv.insert(
            "pos_embedding".into(),
            (vec![c.max_seq, c.d_model], pos.data().to_vec()),
        );
    }
    for (l, block) in weights.blocks.iter().enumerate() {
        let stack = |mats: &[Mat]| -> Vec<f32> {
            mats.iter().flat_map(|m| m.data().to_vec()).collect()
        };
        inv.insert(
            format!("blocks.{}.norm1.scale", l),
            (vec![c.d_model], block.norm1_scale.clone()),
        );
        inv.insert(
            format!("blocks.{}.attn.W_Q", l),
            (vec![c.n_heads, c.d_model, c.d_head], stack(&block.attn.w_q)),
        );
        inv.insert(
            format!("blocks.{}.attn.W_K", l),
            (vec![c.n_heads, c.d_model, c.d_head], stack(&block.attn.w_k)),
        );
        inv.insert(
            format!("blocks.{}.attn.W_V", l),
            (vec![c.n_heads, c.d_model, c.d_head], stack(&block.attn.w_v)),
        );
        inv.insert(
            format!("blocks.{}.attn.W_O", l),
            (vec![c.n_heads, c.d_head, c.d_model], stack(&block.attn.w_o)),
        );
        inv.insert(
            format!("blocks.{}.norm2.scale", l),
            (vec![c.d_model], block.norm2_scale.clone()),
        );
        inv.insert(
            format!("blocks.{}.mlp.W_in", l),
            (vec![c.d_model, c.d_mlp], block.mlp.w_in.data().to_vec()),
        );
        inv.insert(
            format!("blocks.{}.mlp.b_in", l),
            (vec![c.d_mlp], block.mlp.b_in.clone()),
        );
        inv.insert(
            format!("blocks.{}.mlp.W_out", l),
            (vec![c.d_mlp, c.d_model], block.mlp.w_out.data().to_vec()),
        );
        inv.insert(
            format!("blocks.{}.mlp.b_out", l),
            (vec![c.d_model], block.mlp.b_out.clone()),
        );
    }
    inv.insert(
        "unembedding".into(),
        (
            vec![c.d_model, c.vocab_size],
            weights.unembedding.data().to_vec(),
        ),
    );
    inv
}

/// Serializes a model to container bytes.
pub fn model_to_bytes(weights: &Weights) -> Vec<u8> {
    let inv = collect_tensors(weights);
    let mut tensors = BTreeMap::new();
    let mut data: Vec<u8> = Vec::new();
    for (name, (shape, values)) in &inv {
        let offset = data.len();
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        tensors.insert(
            name.clone(),
            TensorEntry {
                dtype: "f32".into(),
                shape: shape.clone(),
                offset,
                length: data.len() - offset,
            },
        );
    }
    let header = Header {
        config: config_to_header(&weights.config),
        tensors,
    };
    let header_json = serde_json::to_string(&header).expect("header serialization is infallible");
    let mut out = Vec::with_capacity(8 + header_json.len() + data.len());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(header_json.as_bytes());
    out.extend_from_slice(&data);
    out
}

pub fn save_model(path: &Path, weights: &Weights) -> Result<(), FormatError> {
    std::fs::write(path, model_to_bytes(weights)).map_err(|e| io_err(path, e))
}

/// Parses container bytes back into validated weights. Failure modes are
/// reported distinctly: a malformed header, a missing tensor, a shape
/// mismatch, and non-finite values each carry their own error.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Weights, FormatError> {
    if bytes.len() < 8 {
        return Err(FormatError::MalformedHeader(
            "file shorter than the 8-byte length prefix".into(),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let rest = &bytes[8..];
    if header_len > rest.len() {
        return Err(FormatError::MalformedHeader(format!(
            "declared header length {} exceeds file size",
            header_len
        )));
    }
    let header_text = std::str::from_utf8(&rest[..header_len])
        .map_err(|e| FormatError::MalformedHeader(format!("header is not UTF-8: {}", e)))?;
    let header: Header = serde_json::from_str(header_text)
        .map_err(|e| FormatError::MalformedHeader(format!("header is not valid JSON: {}", e)))?;
    let config = config_from_header(&header.config)?;
    let data = &rest[header_len..];

    let take = |name: String, want: Vec<usize>| -> Result<Vec<f32>, FormatError> {
        let entry = header
            .tensors
            .get(&name)
            .ok_or_else(|| FormatError::MissingTensor(name.clone()))?;
        if entry.dtype != "f32" {
            return Err(FormatError::BadTensor {
                name,
                reason: format!("unsupported dtype `{}`", entry.dtype),
            });
        }
        if entry.shape != want {
            return Err(FormatError::TensorShape {
                name,
                got: entry.shape.clone(),
                want,
            });
        }
        let n: usize = want.iter().product();
        if entry.length != n * 4 {
            return Err(FormatError::BadTensor {
                name,
                reason: format!("byte length {} does not match shape", entry.length),
            });
        }
        let end = entry.offset.checked_add(entry.length).filter(|&e| e <= data.len());
        let Some(end) = end else {
            return Err(FormatError::BadTensor {
                name,
                reason: "data range out of bounds".into(),
            });
        };
        Ok(data[entry.offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    };
    let mat = |name: String, rows: usize, cols: usize| -> Result<Mat, FormatError> {
        let values = take(name.clone(), vec![rows, cols])?;
        Mat::from_vec(rows, cols, values).map_err(FormatError::Core)
    };
    let per_head = |name: String, rows: usize, cols: usize| -> Result<Vec<Mat>, FormatError> {
        let values = take(name, vec![config.n_heads, rows, cols])?;
        values
            .chunks(rows * cols)
            .map(|chunk| Mat::from_vec(rows, cols, chunk.to_vec()).map_err(FormatError::Core))
            .collect()
    };

    let token_embedding = mat(
        "token_embedding".into(),
        config.vocab_size,
        config.d_model,
    )?;
    let pos_embedding = if config.positional_kind == PositionalKind::Learned {
        Some(mat("pos_embedding".into(), config.max_seq, config.d_model)?)
    } else {
        None
    };
    let mut blocks = Vec::with_capacity(config.n_layers);
    for l in 0..config.n_layers {
        blocks.push(BlockWeights {
            norm1_scale: take(format!("blocks.{}.norm1.scale", l), vec![config.d_model])?,
            attn: AttnWeights {
                w_q: per_head(format!("blocks.{}.attn.W_Q", l), config.d_model, config.d_head)?,
                w_k: per_head(format!("blocks.{}.attn.W_K", l), config.d_model, config.d_head)?,
                w_v: per_head(format!("blocks.{}.attn.W_V", l), config.d_model, config.d_head)?,
                w_o: per_head(format!("blocks.{}.attn.W_O", l), config.d_head, config.d_model)?,
            },
            norm2_scale: take(format!("blocks.{}.norm2.scale", l), vec![config.d_model])?,
            mlp: MlpWeights {
                w_in: mat(format!("blocks.{}.mlp.W_in", l), config.d_model, config.d_mlp)?,
                b_in: take(format!("blocks.{}.mlp.b_in", l), vec![config.d_mlp])?,
                w_out: mat(format!("blocks.{}.mlp.W_out", l), config.d_mlp, config.d_model)?,
                b_out: take(format!("blocks.{}.mlp.b_out", l), vec![config.d_model])?,
            },
        });
    }
    let unembedding = mat("unembedding".into(), config.d_model, config.vocab_size)?;
    let weights = Weights {
        config,
        token_embedding,
        pos_embedding,
        blocks,
        unembedding,
    };
    // Engine-side validation distinguishes shape and non-finite failures.
    weights.validate()?;
    Ok(weights)
}

pub fn load_model(path: &Path) -> Result<Weights, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    model_from_bytes(&bytes)
}
