//! Dense `(T, rows, cols)` tensors: detector masks, soft labels, probability
//! maps and per-cell weights all share this layout.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub times: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(times: usize, rows: usize, cols: usize) -> Self {
        Self::filled(times, rows, cols, 0.0)
    }

    pub fn filled(times: usize, rows: usize, cols: usize, value: f64) -> Self {
        Self {
            times,
            rows,
            cols,
            data: vec![value; times * rows * cols],
        }
    }

    /// Returns `None` if `data` does not have `times * rows * cols` entries.
    pub fn from_vec(times: usize, rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == times * rows * cols).then_some(Self {
            times,
            rows,
            cols,
            data,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn idx(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.rows + i) * self.cols + j
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(t, i, j)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, j: usize, v: f64) {
        let k = self.idx(t, i, j);
        self.data[k] = v;
    }

    pub fn plane(&self, t: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn plane_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn same_shape(&self, other: &Volume) -> bool {
        self.times == other.times && self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Binarizes at `threshold` (`>=` maps to 1).
    pub fn threshold(&self, threshold: f64) -> Volume {
        Volume {
            times: self.times,
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&p| if p >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Positive cells as `(t, i, j)`, in storage order.
    pub fn positives(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for t in 0..self.times {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    if self.get(t, i, j) != 0.0 {
                        out.push((t, i, j));
                    }
                }
            }
        }
        out
    }
}
