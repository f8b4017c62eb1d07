//! WFLD v1 field files: one JSON header line, then little-endian `f32`
//! values in `(T, d, r, c)` order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tcsteer_core::fields::{FieldSequence, StandardizationStats, Variable};
use tcsteer_core::geo::GridGeometry;
use tcsteer_core::volume::Volume;
use thiserror::Error;

use crate::error::{Error, Result};

pub const MAGIC: &str = "WFLD1";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WfldError {
    #[error("not a WFLD1 file")]
    Magic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unsupported dtype `{0}`")]
    Dtype(String),
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// Latitude of row `i` is `lat0 + dlat * i`, longitude of column `j` is
/// `lon0 + dlon * j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub lat0: f64,
    pub dlat: f64,
    pub lon0: f64,
    pub dlon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub r: usize,
    pub c: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub variables: Vec<String>,
    pub grid: Affine,
    pub dtype: String,
    /// Standardization statistics the values were produced with, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<StandardizationStats>,
}

impl Header {
    fn geometry(&self) -> std::result::Result<GridGeometry, WfldError> {
        let a = self.grid;
        if a.dlat != a.dlon {
            return Err(WfldError::Grid("only square cells are supported".into()));
        }
        GridGeometry::new(self.r, self.c, a.lat0, a.lon0, a.dlat)
            .map_err(|e| WfldError::Grid(e.to_string()))
    }
}

pub fn encode(
    f: &FieldSequence,
    stats: Option<&StandardizationStats>,
) -> std::result::Result<Vec<u8>, WfldError> {
    let g = f.geometry();
    let header = Header {
        magic: MAGIC.into(),
        r: g.rows,
        c: g.cols,
        t: f.times(),
        variables: f.variables().iter().map(|v| v.name().to_string()).collect(),
        grid: Affine {
            lat0: g.lat0,
            dlat: g.spacing,
            lon0: g.lon0,
            dlon: g.spacing,
        },
        dtype: DTYPE.into(),
        stats: stats.cloned(),
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| WfldError::Header(e.to_string()))?;
    out.push(b'\n');
    out.reserve(f.data().len() * 4);
    let d = f.variables().len();
    for (k, chunk) in f.data().chunks(g.cells()).enumerate() {
        for &x in chunk {
            let y = x as f32;
            if !y.is_finite() {
                return Err(WfldError::NonFinite(f.variables()[k % d].name().into()));
            }
            out.extend_from_slice(&y.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(FieldSequence, Option<StandardizationStats>), WfldError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| WfldError::Header("missing header line".into()))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|_| WfldError::Magic)?;
    if value.get("magic").and_then(|m| m.as_str()) != Some(MAGIC) {
        return Err(WfldError::Magic);
    }
    let header: Header =
        serde_json::from_value(value).map_err(|e| WfldError::Header(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(WfldError::Dtype(header.dtype));
    }
    let vars: Vec<Variable> = header
        .variables
        .iter()
        .map(|n| Variable::from_name(n).map_err(|_| WfldError::UnknownVariable(n.clone())))
        .collect::<std::result::Result<_, _>>()?;
    let g = header.geometry()?;
    let payload = &bytes[nl + 1..];
    let n = header.t * vars.len() * g.cells();
    if payload.len() != n * 4 {
        return Err(WfldError::PayloadSize {
            expected: n * 4,
            found: payload.len(),
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if let Some(q) = data.iter().position(|x| !x.is_finite()) {
        let k = (q / g.cells()) % vars.len().max(1);
        return Err(WfldError::NonFinite(vars[k].name().into()));
    }
    let f = FieldSequence::new(g, header.t, vars, data).map_err(|e| WfldError::Header(e.to_string()))?;
    Ok((f, header.stats))
}

pub fn write_field(f: &FieldSequence, path: &Path) -> Result<()> {
    write_field_with_stats(f, None, path)
}

pub fn write_field_with_stats(
    f: &FieldSequence,
    stats: Option<&StandardizationStats>,
    path: &Path,
) -> Result<()> {
    let bytes = encode(f, stats).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<FieldSequence> {
    Ok(read_field_with_stats(path)?.0)
}

pub fn read_field_with_stats(path: &Path) -> Result<(FieldSequence, Option<StandardizationStats>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_mask(v: &Volume, g: &GridGeometry, variable: Variable, path: &Path) -> Result<()> {
    write_field(&FieldSequence::from_volume(*g, variable, v)?, path)
}

/// Reads a single-variable file as a volume with its grid.
pub fn read_mask(path: &Path) -> Result<(Volume, GridGeometry)> {
    let f = read_field(path)?;
    if f.variables().len() != 1 {
        return Err(Error::format(path, "expected a single-variable file"));
    }
    Ok((f.to_volume(), *f.geometry()))
}
