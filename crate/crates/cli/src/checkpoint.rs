//! Surrogate checkpoints: one JSON header line (architecture, parameter
//! count, standardization statistics) followed by the parameters as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tcsteer_core::fields::StandardizationStats;
use tcsteer_core::surrogate::{Architecture, SurrogateModel};

use crate::error::{Error, Result};

pub const MAGIC: &str = "TCSM1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    magic: String,
    architecture: Architecture,
    params: usize,
    dtype: String,
    stats: StandardizationStats,
}

/// A model together with the statistics its inputs were standardized with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SurrogateModel,
    pub stats: StandardizationStats,
}

pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let h = Header {
        magic: MAGIC.into(),
        architecture: c.model.arch.clone(),
        params: c.model.params.len(),
        dtype: "f64le".into(),
        stats: c.stats.clone(),
    };
    let mut out = serde_json::to_vec(&h).expect("serializable");
    out.push(b'\n');
    for p in &c.model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or("missing header line")?;
    let h: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| format!("malformed header: {e}"))?;
    if h.magic != MAGIC {
        return Err("not a surrogate checkpoint".into());
    }
    if h.dtype != "f64le" {
        return Err(format!("unsupported dtype `{}`", h.dtype));
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != h.params * 8 {
        return Err(format!(
            "payload size mismatch: expected {} bytes, found {}",
            h.params * 8,
            payload.len()
        ));
    }
    let params = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let model = SurrogateModel::from_params(h.architecture, params).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        model,
        stats: h.stats,
    })
}

pub fn write_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(c)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}
