//! Binary weight container.
//!
//! Layout: 8-byte magic `AUSTEER1`, a little-endian u32 header length, a
//! UTF-8 JSON header `{config, tensors: [{name, shape, byte_offset}]}`, then
//! the raw little-endian f32 payloads, row-major, in header order. Byte
//! offsets are relative to the start of the payload region.
//!
//! Canonical tensor names: `tok_emb`, `pos_emb`,
//! `layers.{i}.attn.{wq|wk|wv|wo}`, `layers.{i}.ffn.{w_up|w_down}`,
//! `layers.{i}.{norm1|norm2}`, `final_norm`, `lm_head`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use austeer_core::model::{LayerWeights, Model, ModelConfig, ModelParts};
use austeer_core::numerics::{Matrix, Vector};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"AUSTEER1";

#[derive(Debug, Serialize, Deserialize)]
struct ConfigWire {
    n_layers: usize,
    d_model: usize,
    n_heads: usize,
    d_head: usize,
    d_ff: usize,
    vocab_size: usize,
    max_seq: usize,
    norm_eps: f32,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorWire {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ConfigWire,
    tensors: Vec<TensorWire>,
}

/// Canonical tensor order and shapes for a config.
fn canonical_tensors(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = c.d_model;
    let mut out = vec![
        ("tok_emb".to_string(), vec![c.vocab_size, d]),
        ("pos_emb".to_string(), vec![c.max_seq, d]),
    ];
    for i in 0..c.n_layers {
        out.push((format!("layers.{i}.attn.wq"), vec![d, d]));
        out.push((format!("layers.{i}.attn.wk"), vec![d, d]));
        out.push((format!("layers.{i}.attn.wv"), vec![d, d]));
        out.push((format!("layers.{i}.attn.wo"), vec![d, d]));
        out.push((format!("layers.{i}.ffn.w_up"), vec![c.d_ff, d]));
        out.push((format!("layers.{i}.ffn.w_down"), vec![d, c.d_ff]));
        out.push((format!("layers.{i}.norm1"), vec![d]));
        out.push((format!("layers.{i}.norm2"), vec![d]));
    }
    out.push(("final_norm".to_string(), vec![d]));
    out.push(("lm_head".to_string(), vec![c.vocab_size, d]));
    out
}

fn tensor_data<'m>(model: &'m Model, name: &str) -> &'m [f32] {
    let parts = model.parts();
    let field: Option<&str> = name.strip_prefix("layers.").map(|rest| rest);
    if let Some(rest) = field {
        let (idx, field) = rest.split_once('.').expect("canonical name");
        let layer = &parts.layers[idx.parse::<usize>().expect("canonical index")];
        return match field {
            "attn.wq" => layer.wq.data(),
            "attn.wk" => layer.wk.data(),
            "attn.wv" => layer.wv.data(),
            "attn.wo" => layer.wo.data(),
            "ffn.w_up" => layer.w_up.data(),
            "ffn.w_down" => layer.w_down.data(),
            "norm1" => layer.norm1.as_slice(),
            "norm2" => layer.norm2.as_slice(),
            other => unreachable!("canonical field {other}"),
        };
    }
    match name {
        "tok_emb" => parts.tok_emb.data(),
        "pos_emb" => parts.pos_emb.data(),
        "final_norm" => parts.final_norm.as_slice(),
        "lm_head" => parts.lm_head.data(),
        other => unreachable!("canonical name {other}"),
    }
}

/// Serialize a model into container bytes.
pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let config = model.config();
    let names = canonical_tensors(config);
    let mut tensors = Vec::with_capacity(names.len());
    let mut offset = 0usize;
    for (name, shape) in &names {
        tensors.push(TensorWire {
            name: name.clone(),
            shape: shape.clone(),
            byte_offset: offset,
        });
        offset += shape.iter().product::<usize>() * 4;
    }
    let header = Header {
        config: ConfigWire {
            n_layers: config.n_layers,
            d_model: config.d_model,
            n_heads: config.n_heads,
            d_head: config.d_head,
            d_ff: config.d_ff,
            vocab_size: config.vocab_size,
            max_seq: config.max_seq,
            norm_eps: config.norm_eps,
        },
        tensors,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(12 + header_json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (name, _) in &names {
        for v in tensor_data(model, name) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse container bytes into a validated model.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 12 {
        return Err(CliError::model("container shorter than magic and header length"));
    }
    if &bytes[..8] != MAGIC {
        return Err(CliError::model("bad magic: not an AUSTEER1 container"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 12 + header_len {
        return Err(CliError::model("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| CliError::model(format!("malformed header JSON: {e}")))?;
    let payload = &bytes[12 + header_len..];

    let config = ModelConfig {
        n_layers: header.config.n_layers,
        d_model: header.config.d_model,
        n_heads: header.config.n_heads,
        d_head: header.config.d_head,
        d_ff: header.config.d_ff,
        vocab_size: header.config.vocab_size,
        max_seq: header.config.max_seq,
        norm_eps: header.config.norm_eps,
    };
    config.validate().map_err(CliError::model)?;

    let mut by_name: BTreeMap<&str, &TensorWire> = BTreeMap::new();
    for t in &header.tensors {
        if by_name.insert(t.name.as_str(), t).is_some() {
            return Err(CliError::model(format!("duplicate tensor key `{}`", t.name)));
        }
    }
    let canonical = canonical_tensors(&config);
    if header.tensors.len() != canonical.len() {
        for t in &header.tensors {
            if !canonical.iter().any(|(n, _)| n == &t.name) {
                return Err(CliError::model(format!("unexpected tensor key `{}`", t.name)));
            }
        }
    }

    let read_tensor = |name: &str| -> Result<Vec<f32>> {
        let t = by_name
            .get(name)
            .ok_or_else(|| CliError::model(format!("missing tensor key `{name}`")))?;
        let count: usize = t.shape.iter().product();
        let end = t.byte_offset + count * 4;
        if end > payload.len() {
            return Err(CliError::model(format!(
                "truncated payload: tensor `{name}` needs bytes {}..{end}, payload has {}",
                t.byte_offset,
                payload.len()
            )));
        }
        Ok(payload[t.byte_offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    };

    let matrix = |name: &str, data: Vec<f32>, rows: usize, cols: usize| -> Result<Matrix> {
        Matrix::new(rows, cols, data)
            .map_err(|e| CliError::model(format!("tensor `{name}`: {e}")))
    };
    let vector = |name: &str, data: Vec<f32>| -> Result<Vector> {
        Vector::new(data).map_err(|e| CliError::model(format!("tensor `{name}`: {e}")))
    };

    // Shapes come from the header; Model::new validates them against the
    // config and names the offending key.
    macro_rules! mat {
        ($name:expr) => {{
            let name = $name;
            let data = read_tensor(&name)?;
            let t = by_name.get(name.as_str()).expect("present");
            match t.shape.as_slice() {
                [r, c] => matrix(&name, data, *r, *c)?,
                other => {
                    return Err(CliError::model(format!(
                        "tensor `{name}` has rank-{} shape, expected a matrix",
                        other.len()
                    )))
                }
            }
        }};
    }
    macro_rules! vec1 {
        ($name:expr) => {{
            let name = $name;
            let data = read_tensor(&name)?;
            let t = by_name.get(name.as_str()).expect("present");
            match t.shape.as_slice() {
                [_] => vector(&name, data)?,
                other => {
                    return Err(CliError::model(format!(
                        "tensor `{name}` has rank-{} shape, expected a vector",
                        other.len()
                    )))
                }
            }
        }};
    }

    let tok_emb = mat!("tok_emb".to_string());
    let pos_emb = mat!("pos_emb".to_string());
    let mut layers = Vec::with_capacity(config.n_layers);
    for i in 0..config.n_layers {
        layers.push(LayerWeights {
            wq: mat!(format!("layers.{i}.attn.wq")),
            wk: mat!(format!("layers.{i}.attn.wk")),
            wv: mat!(format!("layers.{i}.attn.wv")),
            wo: mat!(format!("layers.{i}.attn.wo")),
            w_up: mat!(format!("layers.{i}.ffn.w_up")),
            w_down: mat!(format!("layers.{i}.ffn.w_down")),
            norm1: vec1!(format!("layers.{i}.norm1")),
            norm2: vec1!(format!("layers.{i}.norm2")),
        });
    }
    let final_norm = vec1!("final_norm".to_string());
    let lm_head = mat!("lm_head".to_string());

    Model::new(
        config,
        ModelParts {
            tok_emb,
            pos_emb,
            layers,
            final_norm,
            lm_head,
        },
    )
    .map_err(CliError::model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, model_to_bytes(model))
        .map_err(|e| CliError::model(format!("writing {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::model(format!("reading {}: {e}", path.display())))?;
    model_from_bytes(&bytes)
}
