//! Detectability of adversarial forecasts: fixed-length summary features
//! and three anomaly detectors (PCA reconstruction error, isolation
//! forest, local outlier factor) fitted on clean forecasts.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::FieldSequence;

/// Fewest clean samples a detector is fitted on.
pub const MIN_SAMPLES: usize = 20;
const PCA_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StealthError {
    #[error("need at least {MIN_SAMPLES} clean samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite feature")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Param(&'static str),
    #[error("unknown detector kind")]
    UnknownKind,
}

/// Mean, std, min and max of the block-mean field, per variable and time
/// step. Blocks at the lattice edge may be smaller than `block`.
pub fn features(f: &FieldSequence, block: usize) -> Vec<f64> {
    let g = f.geometry();
    let block = block.max(1);
    let br = g.rows.div_ceil(block);
    let bc = g.cols.div_ceil(block);
    let mut out = Vec::with_capacity(f.times() * f.variables().len() * 4);
    let mut means = vec![0.0; br * bc];
    for t in 0..f.times() {
        for k in 0..f.variables().len() {
            let plane = f.plane(t, k);
            for bi in 0..br {
                for bj in 0..bc {
                    let (i0, i1) = (bi * block, ((bi + 1) * block).min(g.rows));
                    let (j0, j1) = (bj * block, ((bj + 1) * block).min(g.cols));
                    let mut s = 0.0;
                    for i in i0..i1 {
                        s += plane[i * g.cols + j0..i * g.cols + j1].iter().sum::<f64>();
                    }
                    means[bi * bc + bj] = s / ((i1 - i0) * (j1 - j0)) as f64;
                }
            }
            let n = means.len() as f64;
            let m = means.iter().sum::<f64>() / n;
            let sd = (means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.extend_from_slice(&[m, sd, lo, hi]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Pca,
    IForest,
    Lof,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Pca, DetectorKind::IForest, DetectorKind::Lof];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Pca => "pca",
            DetectorKind::IForest => "iforest",
            DetectorKind::Lof => "lof",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, StealthError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(StealthError::UnknownKind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StealthParams {
    pub contamination: f64,
    /// Cumulative explained variance kept by PCA.
    pub variance: f64,
    pub trees: usize,
    pub subsample: usize,
    /// Depth limit of isolation trees; `None` uses `ceil(log2(subsample))`.
    pub max_depth: Option<usize>,
    /// Grow isolation trees until every point is isolated.
    pub unlimited_depth: bool,
    pub neighbors: usize,
    pub seed: u64,
}

impl Default for StealthParams {
    fn default() -> Self {
        Self {
            contamination: 0.05,
            variance: 0.95,
            trees: 100,
            subsample: 256,
            max_depth: None,
            unlimited_depth: false,
            neighbors: 20,
            seed: 0,
        }
    }
}

/// Harmonic number `H(n)`.
fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Average path length of an unsuccessful search in a binary search tree
/// of `n` points: `2 H(n-1) - 2 (n-1) / n`.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => 2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64,
    }
}

/// Linear-interpolation quantile of `v` at `q` in `[0, 1]`.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn build(data: &[Vec<f64>], idx: &mut [usize], max_depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut t = IsolationTree { nodes: Vec::new() };
        t.grow(data, idx, 0, max_depth, rng);
        t
    }

    fn grow(
        &mut self,
        data: &[Vec<f64>],
        idx: &mut [usize],
        depth: usize,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { size: idx.len() });
        if idx.len() <= 1 || depth >= max_depth {
            return at;
        }
        let dim = data[idx[0]].len();
        let splittable: Vec<(usize, f64, f64)> = (0..dim)
            .filter_map(|f| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &i in idx.iter() {
                    lo = lo.min(data[i][f]);
                    hi = hi.max(data[i][f]);
                }
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if splittable.is_empty() {
            return at;
        }
        let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
        let value = rng.random_range(lo..hi);
        let mut mid = 0;
        for k in 0..idx.len() {
            if data[idx[k]][feature] < value {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(data, l, depth + 1, max_depth, rng);
        let right = self.grow(data, r, depth + 1, max_depth, rng);
        self.nodes[at] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        at
    }

    /// Path length of `x`, with the usual correction for unsplit leaves.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[at] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    at = if x[feature] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Pca {
        mean: Vec<f64>,
        /// Kept components, each of feature length.
        basis: Vec<Vec<f64>>,
    },
    IForest {
        trees: Vec<IsolationTree>,
        psi: usize,
    },
    Lof {
        train: Vec<Vec<f64>>,
        k: usize,
        k_distance: Vec<f64>,
        lrd: Vec<f64>,
    },
}

/// A fitted detector. Features are z-scored with the clean statistics
/// before reaching the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyDetector {
    pub kind: DetectorKind,
    pub threshold: f64,
    pub contamination: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    state: State,
}

fn lof_neighbors(train: &[Vec<f64>], x: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, y)| (i, dist2(x, y).sqrt()))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    d
}

fn lrd_of(neigh: &[(usize, f64)], k_distance: &[f64]) -> f64 {
    let reach: f64 = neigh.iter().map(|&(o, d)| d.max(k_distance[o])).sum::<f64>() / neigh.len() as f64;
    1.0 / (reach + 1e-10)
}

impl AnomalyDetector {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn normalize(&self, x: &[f64]) -> Result<Vec<f64>, StealthError> {
        if x.len() != self.mean.len() {
            return Err(StealthError::Dimension {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StealthError::NonFinite);
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    fn raw_score(&self, z: &[f64], self_index: Option<usize>) -> f64 {
        match &self.state {
            State::Pca { .. } => pca_residual(&self.state, z),
            State::IForest { trees, psi } => {
                let mean_h = trees.iter().map(|t| t.path_length(z)).sum::<f64>() / trees.len() as f64;
                2f64.powf(-mean_h / average_path_length(*psi))
            }
            State::Lof {
                train,
                k,
                k_distance,
                lrd,
            } => {
                let neigh = lof_neighbors(train, z, *k, self_index);
                let own = lrd_of(&neigh, k_distance);
                neigh.iter().map(|&(o, _)| lrd[o]).sum::<f64>() / neigh.len() as f64 / own
            }
        }
    }

    /// Anomaly score (higher is more anomalous) and whether it exceeds the
    /// threshold.
    pub fn score(&self, x: &[f64]) -> Result<(f64, bool), StealthError> {
        let z = self.normalize(x)?;
        let s = self.raw_score(&z, None);
        Ok((s, s > self.threshold))
    }
}

/// Fits a detector on clean feature vectors.
pub fn fit(
    kind: DetectorKind,
    clean: &[Vec<f64>],
    p: &StealthParams,
) -> Result<AnomalyDetector, StealthError> {
    if clean.len() < MIN_SAMPLES {
        return Err(StealthError::TooFewSamples(clean.len()));
    }
    if !(p.contamination > 0.0 && p.contamination < 1.0) {
        return Err(StealthError::Param("contamination must lie in (0, 1)"));
    }
    let dim = clean[0].len();
    for x in clean {
        if x.len() != dim {
            return Err(StealthError::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StealthError::NonFinite);
        }
    }
    let n = clean.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| clean.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let sd = (clean.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let mut det = AnomalyDetector {
        kind,
        threshold: 0.0,
        contamination: p.contamination,
        mean,
        scale,
        state: State::Pca {
            mean: Vec::new(),
            basis: Vec::new(),
        },
    };
    let z: Vec<Vec<f64>> = clean.iter().map(|x| det.normalize(x)).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    det.state = match kind {
        DetectorKind::Pca => fit_pca(&z, p.variance)?,
        DetectorKind::IForest => {
            if p.trees == 0 || p.subsample < 2 {
                return Err(StealthError::Param("need trees and a subsample of at least 2"));
            }
            let psi = p.subsample.min(z.len());
            let depth = if p.unlimited_depth {
                usize::MAX
            } else {
                p.max_depth
                    .unwrap_or_else(|| (psi as f64).log2().ceil() as usize)
            };
            let trees = (0..p.trees)
                .map(|_| {
                    let mut idx = sample(&mut rng, z.len(), psi).into_vec();
                    IsolationTree::build(&z, &mut idx, depth, &mut rng)
                })
                .collect();
            State::IForest { trees, psi }
        }
        DetectorKind::Lof => {
            if p.neighbors == 0 {
                return Err(StealthError::Param("need at least one neighbour"));
            }
            let k = p.neighbors.min(z.len() - 1);
            let neigh: Vec<Vec<(usize, f64)>> =
                (0..z.len()).map(|i| lof_neighbors(&z, &z[i], k, Some(i))).collect();
            let k_distance: Vec<f64> = neigh.iter().map(|nb| nb.last().unwrap().1).collect();
            let lrd = neigh.iter().map(|nb| lrd_of(nb, &k_distance)).collect();
            State::Lof {
                train: z.clone(),
                k,
                k_distance,
                lrd,
            }
        }
    };
    let scores: Vec<f64> = match kind {
        DetectorKind::Pca => pca_holdout_scores(&z, p.variance)?,
        _ => z
            .iter()
            .enumerate()
            .map(|(i, x)| det.raw_score(x, Some(i)))
            .collect(),
    };
    det.threshold = quantile(&scores, 1.0 - p.contamination);
    Ok(det)
}

/// Residuals of each sample under a PCA fitted without its fold. In-sample
/// residuals collapse to zero once the dimension exceeds the sample count.
fn pca_holdout_scores(z: &[Vec<f64>], variance: f64) -> Result<Vec<f64>, StealthError> {
    let folds = PCA_FOLDS.min(z.len());
    let mut scores = vec![0.0; z.len()];
    for f in 0..folds {
        let train: Vec<Vec<f64>> = z
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != f)
            .map(|(_, x)| x.clone())
            .collect();
        let state = fit_pca(&train, variance)?;
        for (i, x) in z.iter().enumerate().filter(|(i, _)| i % folds == f) {
            scores[i] = pca_residual(&state, x);
        }
    }
    Ok(scores)
}

fn pca_residual(state: &State, z: &[f64]) -> f64 {
    let State::Pca { mean, basis } = state else {
        unreachable!()
    };
    let c: Vec<f64> = z.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut r = c.clone();
    for v in basis {
        let proj: f64 = c.iter().zip(v).map(|(a, b)| a * b).sum();
        for (ri, vi) in r.iter_mut().zip(v) {
            *ri -= proj * vi;
        }
    }
    r.iter().map(|x| x * x).sum()
}

fn fit_pca(z: &[Vec<f64>], variance: f64) -> Result<State, StealthError> {
    if !(variance > 0.0 && variance <= 1.0) {
        return Err(StealthError::Param("explained variance must lie in (0, 1]"));
    }
    let n = z.len();
    let dim = z[0].len();
    let mean: Vec<f64> = (0..dim).map(|j| z.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let centred = DMatrix::from_fn(n, dim, |i, j| z[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut basis = Vec::new();
    let mut acc = 0.0;
    for &c in &order {
        if total <= 0.0 || acc >= variance * total {
            break;
        }
        acc += eig.eigenvalues[c].max(0.0);
        basis.push(eig.eigenvectors.column(c).iter().copied().collect());
    }
    Ok(State::Pca { mean, basis })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
    /// False when nothing was flagged and precision is reported as 0.
    pub precision_defined: bool,
}

/// Confusion arithmetic with adversarial samples as the positive class.
pub fn evaluate(
    det: &AnomalyDetector,
    clean: &[Vec<f64>],
    adversarial: &[Vec<f64>],
) -> Result<StealthReport, StealthError> {
    let flagged = |xs: &[Vec<f64>]| -> Result<usize, StealthError> {
        let mut c = 0;
        for x in xs {
            if det.score(x)?.1 {
                c += 1;
            }
        }
        Ok(c)
    };
    let tp = flagged(adversarial)?;
    let fp = flagged(clean)?;
    Ok(report(tp, fp, adversarial.len() - tp, clean.len() - fp))
}

pub fn report(tp: usize, fp: usize, fn_: usize, tn: usize) -> StealthReport {
    let precision_defined = tp + fp > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    StealthReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        r#fn: fn_,
        precision_defined,
    }
}
