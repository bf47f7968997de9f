//! JSON checkpoints.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "arch": { "dims": {"k_tx": 8, "n_rx": 16}, "num_layers": 24, ... },
//!   "layers": [
//!     { "w1": {"shape": [64, 40], "data": [...]}, "b1": {"shape": [64], "data": [...]},
//!       "w2": ..., "b2": ..., "w3": ..., "b3": ..., "t": 0.5 },
//!     ...
//!   ]
//! }
//! ```
//!
//! Arrays are row-major. Floats are written in shortest round-trip form, so
//! `load(save(p)) == p` exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, DetNetParams, LayerParams};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    w1: Array,
    b1: Array,
    w2: Array,
    b2: Array,
    w3: Array,
    b3: Array,
    t: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    arch: ArchConfig,
    layers: Vec<LayerRecord>,
}

fn from_matrix(m: &Matrix) -> Array {
    Array {
        shape: vec![m.rows(), m.cols()],
        data: m.as_slice().to_vec(),
    }
}

fn from_vector(v: &Vector) -> Array {
    Array {
        shape: vec![v.len()],
        data: v.to_vec(),
    }
}

fn to_matrix(a: Array, what: &str) -> Result<Matrix> {
    match a.shape[..] {
        [r, c] => Matrix::new(r, c, a.data).map_err(|e| Error::Checkpoint(format!("{what}: {e}"))),
        _ => Err(Error::Checkpoint(format!("{what}: expected a 2-d shape, found {:?}", a.shape))),
    }
}

fn to_vector(a: Array, what: &str) -> Result<Vector> {
    match a.shape[..] {
        [n] if n == a.data.len() => Ok(Vector::from(a.data)),
        _ => Err(Error::Checkpoint(format!(
            "{what}: shape {:?} does not describe {} entries",
            a.shape,
            a.data.len()
        ))),
    }
}

pub fn to_json(params: &DetNetParams) -> Result<String> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        arch: params.arch,
        layers: params
            .layers
            .iter()
            .map(|l| LayerRecord {
                w1: from_matrix(&l.w1),
                b1: from_vector(&l.b1),
                w2: from_matrix(&l.w2),
                b2: from_vector(&l.b2),
                w3: from_matrix(&l.w3),
                b3: from_vector(&l.b3),
                t: l.t,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn from_json(text: &str) -> Result<DetNetParams> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format_version {} (expected {CHECKPOINT_VERSION})",
            file.format_version
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let at = |name: &str| format!("layer {} {name}", i + 1);
            Ok(LayerParams {
                w1: to_matrix(r.w1, &at("w1"))?,
                b1: to_vector(r.b1, &at("b1"))?,
                w2: to_matrix(r.w2, &at("w2"))?,
                b2: to_vector(r.b2, &at("b2"))?,
                w3: to_matrix(r.w3, &at("w3"))?,
                b3: to_vector(r.b3, &at("b3"))?,
                t: r.t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DetNetParams::from_layers(file.arch, layers).map_err(|e| Error::Compatibility(e.to_string()))
}

pub fn save_checkpoint(params: &DetNetParams, path: &Path) -> Result<()> {
    fs::write(path, to_json(params)?)?;
    Ok(())
}

/// Loads a checkpoint; with `expected` set, the stored architecture must
/// match it exactly.
pub fn load_checkpoint(path: &Path, expected: Option<&ArchConfig>) -> Result<DetNetParams> {
    let params = from_json(&fs::read_to_string(path)?)?;
    if let Some(want) = expected {
        if params.arch() != want {
            return Err(Error::Compatibility(format!(
                "expected {} layers of z={} v={} for K={} N={} (alpha {}), found {} layers of z={} v={} for K={} N={} (alpha {})",
                want.num_layers,
                want.z_size,
                want.v_size,
                want.dims.k_tx,
                want.dims.n_rx,
                want.residual_alpha,
                params.arch.num_layers,
                params.arch.z_size,
                params.arch.v_size,
                params.arch.dims.k_tx,
                params.arch.dims.n_rx,
                params.arch.residual_alpha,
            )));
        }
    }
    Ok(params)
}
