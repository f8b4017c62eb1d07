//! Truncated-Gaussian dilation of sparse binary masks into soft labels.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("mask is not binary")]
    NonBinary,
    #[error("sigma must be positive")]
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilationParams {
    /// Kernel width in grid cells.
    pub sigma: f64,
    /// Maximum dilation radius in grid cells.
    pub radius: usize,
}

impl DilationParams {
    pub fn new(sigma: f64, radius: usize) -> Self {
        Self { sigma, radius }
    }

    /// Radius used when training the surrogate.
    pub fn training() -> Self {
        Self::new(1.0, 2)
    }

    /// Radius used for attack targets.
    pub fn attack() -> Self {
        Self::new(1.0, 1)
    }
}

/// `exp(-(du^2 + dv^2) / (2 sigma^2))` inside the disc of radius `radius`,
/// zero outside.
pub fn kernel(du: isize, dv: isize, p: &DilationParams) -> f64 {
    let d2 = (du * du + dv * dv) as f64;
    let r = p.radius as f64;
    if d2 <= r * r {
        (-d2 / (2.0 * p.sigma * p.sigma)).exp()
    } else {
        0.0
    }
}

/// Dilates every positive cell over its disc neighbourhood.
///
/// A cell reached by one neighbourhood takes `max(original, induced)`; a cell
/// reached by several takes the minimum of the induced values, then the max
/// with its original value. Longitude wraps when `wrap_lon` is set.
pub fn dilate(mask: &Volume, p: &DilationParams, wrap_lon: bool) -> Result<Volume, LabelError> {
    if !mask.is_binary() {
        return Err(LabelError::NonBinary);
    }
    if !(p.sigma > 0.0) {
        return Err(LabelError::Sigma);
    }
    if p.radius == 0 {
        return Ok(mask.clone());
    }
    let (rows, cols) = (mask.rows, mask.cols);
    let r = p.radius as isize;
    let mut offsets: Vec<(isize, isize, f64)> = Vec::new();
    for du in -r..=r {
        for dv in -r..=r {
            if du * du + dv * dv <= r * r {
                offsets.push((du, dv, kernel(du, dv, p)));
            }
        }
    }

    let mut out = mask.clone();
    let mut induced = vec![f64::INFINITY; rows * cols];
    let mut covered = vec![0u32; rows * cols];
    for t in 0..mask.times {
        induced.fill(f64::INFINITY);
        covered.fill(0);
        let plane = mask.plane(t);
        for i in 0..rows {
            for j in 0..cols {
                if plane[i * cols + j] != 1.0 {
                    continue;
                }
                for &(du, dv, k) in &offsets {
                    let pi = i as isize + du;
                    if pi < 0 || pi >= rows as isize {
                        continue;
                    }
                    let mut pj = j as isize + dv;
                    if wrap_lon {
                        pj = pj.rem_euclid(cols as isize);
                    } else if pj < 0 || pj >= cols as isize {
                        continue;
                    }
                    let c = pi as usize * cols + pj as usize;
                    covered[c] += 1;
                    induced[c] = induced[c].min(k);
                }
            }
        }
        let o = out.plane_mut(t);
        for c in 0..rows * cols {
            if covered[c] > 0 {
                o[c] = o[c].max(induced[c]);
            }
        }
    }
    Ok(out)
}
