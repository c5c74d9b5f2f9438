//! Versioned binary checkpoint for a trained model.
//!
//! Layout: 4-byte magic `DFCK`, u32 LE version, u64 LE header length, a
//! JSON header (config, input scaler, named tensor manifest, value count),
//! then the flat parameter vector as little-endian f64. The encoding has
//! no timestamps and a fixed field order, so checkpoints from the same
//! seed are byte-identical.

use anyhow::{bail, Context, Result};
use doorfeel_core::model::{InputScaler, ModelConfig, ModelParams, ParamLayout, TrainedModel};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"DFCK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    scaler: InputScaler,
    layout: ParamLayout,
    n_values: usize,
}

pub fn encode(model: &TrainedModel) -> Result<Vec<u8>> {
    let layout = model.params.layout();
    let header = Header {
        config: model.params.config.clone(),
        scaler: model.scaler,
        layout,
        n_values: model.params.values.len(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header_json.len() + 8 * model.params.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for v in &model.params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        bail!("checkpoint: bad magic (not a checkpoint file)");
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        bail!("checkpoint: unsupported version {version} (expected {VERSION})");
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body_start = 16 + hlen;
    if bytes.len() < body_start {
        bail!("checkpoint: truncated header");
    }
    let header: Header =
        serde_json::from_slice(&bytes[16..body_start]).context("checkpoint: parsing header")?;
    let expected_layout = ParamLayout::from_config(&header.config);
    if header.layout != expected_layout {
        bail!("checkpoint: tensor manifest does not match the stored config");
    }
    if header.n_values != expected_layout.total {
        bail!(
            "checkpoint: header claims {} values, config implies {}",
            header.n_values,
            expected_layout.total
        );
    }
    let body = &bytes[body_start..];
    if body.len() != 8 * header.n_values {
        bail!(
            "checkpoint: body is {} bytes, expected {}",
            body.len(),
            8 * header.n_values
        );
    }
    let mut values = Vec::with_capacity(header.n_values);
    for chunk in body.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(TrainedModel {
        params: ModelParams { config: header.config, values },
        scaler: header.scaler,
    })
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    let bytes = encode(model)?;
    fs::write(path, bytes).with_context(|| format!("checkpoint: writing {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    let bytes =
        fs::read(path).with_context(|| format!("checkpoint: reading {}", path.display()))?;
    decode(&bytes)
}
