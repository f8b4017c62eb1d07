//! Differentiable surrogate of the detector: a small all-convolutional
//! network mapping one standardized detector-input snapshot to a per-cell
//! cyclone probability, with hand-written forward and backward passes.
//!
//! Convolutions are 'same' sized, wrap around in longitude and zero-pad in
//! latitude, so the network is equivariant to longitude shifts.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::DetectorInputs;
use crate::volume::Volume;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside logarithms.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("invalid architecture: {0}")]
    Architecture(&'static str),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => sigmoid(z),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Odd square kernel size.
    pub kernel: usize,
    pub activation: Activation,
}

impl LayerSpec {
    fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    fn param_len(&self) -> usize {
        self.weight_len() + self.out_channels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// `in -> hidden -> hidden -> 1`, 3x3 kernels, tanh between layers.
    pub fn three_layer(in_channels: usize, hidden: usize) -> Self {
        let l = |i, o, a| LayerSpec {
            in_channels: i,
            out_channels: o,
            kernel: 3,
            activation: a,
        };
        Self {
            layers: vec![
                l(in_channels, hidden, Activation::Tanh),
                l(hidden, hidden, Activation::Tanh),
                l(hidden, 1, Activation::Identity),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let first = self
            .layers
            .first()
            .ok_or(SurrogateError::Architecture("no layers"))?;
        if first.in_channels == 0 {
            return Err(SurrogateError::Architecture("zero input channels"));
        }
        for w in self.layers.windows(2) {
            if w[0].out_channels != w[1].in_channels {
                return Err(SurrogateError::Architecture("channel counts do not chain"));
            }
        }
        for l in &self.layers {
            if l.kernel % 2 == 0 || l.out_channels == 0 {
                return Err(SurrogateError::Architecture("kernels must be odd, channels positive"));
            }
        }
        if self.layers.last().map(|l| l.out_channels) != Some(1) {
            return Err(SurrogateError::Architecture("last layer must have one channel"));
        }
        Ok(())
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_len).sum()
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            o.push(acc);
            acc += l.param_len();
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub arch: Architecture,
    /// Per layer: weights `(out, in, k, k)` then biases `(out)`.
    pub params: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-layer forward state kept for the backward pass.
struct LayerCache {
    padded: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

struct Pass {
    caches: Vec<LayerCache>,
}

impl SurrogateModel {
    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, SurrogateError> {
        arch.validate()?;
        if params.len() != arch.param_len() {
            return Err(SurrogateError::Shape("parameter count does not match architecture"));
        }
        Ok(Self { arch, params })
    }

    /// Glorot-uniform weights, zero hidden biases, output bias `output_bias`.
    pub fn init(arch: Architecture, seed: u64, output_bias: f64) -> Result<Self, SurrogateError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_len());
        let n = arch.layers.len();
        for (li, l) in arch.layers.iter().enumerate() {
            let k2 = (l.kernel * l.kernel) as f64;
            let limit = (6.0 / ((l.in_channels as f64 + l.out_channels as f64) * k2)).sqrt();
            for _ in 0..l.weight_len() {
                params.push(rng.random_range(-limit..limit));
            }
            let b = if li + 1 == n { output_bias } else { 0.0 };
            params.extend(core::iter::repeat_n(b, l.out_channels));
        }
        Ok(Self { arch, params })
    }

    /// Sets every parameter of the last layer to zero, so the output is
    /// exactly 0.5 everywhere.
    pub fn zero_output_layer(&mut self) {
        let off = *self.arch.offsets().last().unwrap();
        for p in &mut self.params[off..] {
            *p = 0.0;
        }
    }

    fn layer_params(&self, li: usize, offsets: &[usize]) -> (&[f64], &[f64]) {
        let l = &self.arch.layers[li];
        let s = &self.params[offsets[li]..offsets[li] + l.param_len()];
        s.split_at(l.weight_len())
    }

    fn forward_pass(&self, x: &[f64], rows: usize, cols: usize) -> Pass {
        let offsets = self.arch.offsets();
        let n = rows * cols;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.arch.layers.len());
        for (li, l) in self.arch.layers.iter().enumerate() {
            let input: &[f64] = if li == 0 { x } else { &caches[li - 1].post };
            let pad = l.kernel / 2;
            let padded = pad_input(input, l.in_channels, rows, cols, pad);
            let (w, b) = self.layer_params(li, &offsets);
            let mut pre = vec![0.0; l.out_channels * n];
            conv_forward(&padded, w, b, &mut pre, l, rows, cols);
            let post: Vec<f64> = pre.iter().map(|&z| l.activation.apply(z)).collect();
            caches.push(LayerCache { padded, pre, post });
        }
        Pass { caches }
    }

    /// Output logits for one snapshot `(C, rows, cols)`.
    pub fn logits(&self, x: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>, SurrogateError> {
        self.check_input(x, rows, cols)?;
        let mut pass = self.forward_pass(x, rows, cols);
        Ok(pass.caches.pop().unwrap().post)
    }

    fn check_input(&self, x: &[f64], rows: usize, cols: usize) -> Result<(), SurrogateError> {
        if x.len() != self.arch.in_channels() * rows * cols {
            return Err(SurrogateError::Shape("input does not match channels x rows x cols"));
        }
        Ok(())
    }

    /// Probability map for every snapshot of standardized detector inputs.
    pub fn forward(&self, x: &DetectorInputs) -> Result<Volume, SurrogateError> {
        let g = x.geometry();
        let mut out = Volume::zeros(x.times(), g.rows, g.cols);
        for t in 0..x.times() {
            let z = self.logits(x.snapshot(t), g.rows, g.cols)?;
            for (o, z) in out.plane_mut(t).iter_mut().zip(z) {
                *o = sigmoid(z);
            }
        }
        Ok(out)
    }

    /// Backpropagates `dlogit` (gradient of the loss w.r.t. the output
    /// logits) to the input and, when `param_grad` is given, accumulates the
    /// parameter gradient into it.
    fn backward(
        &self,
        pass: &Pass,
        dlogit: &[f64],
        rows: usize,
        cols: usize,
        mut param_grad: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let offsets = self.arch.offsets();
        let n = rows * cols;
        let nl = self.arch.layers.len();
        // gradient w.r.t. the current layer's output (post-activation)
        let mut g_post = dlogit.to_vec();
        for li in (0..nl).rev() {
            let l = &self.arch.layers[li];
            let cache = &pass.caches[li];
            let mut g_pre = g_post;
            for ((g, &z), &a) in g_pre.iter_mut().zip(&cache.pre).zip(&cache.post) {
                *g *= l.activation.derivative(z, a);
            }
            let (w, _) = self.layer_params(li, &offsets);
            if let Some(pg) = param_grad.as_deref_mut() {
                let lg = &mut pg[offsets[li]..offsets[li] + l.param_len()];
                let (gw, gb) = lg.split_at_mut(l.weight_len());
                conv_weight_grad(&cache.padded, &g_pre, gw, l, rows, cols);
                for o in 0..l.out_channels {
                    gb[o] += g_pre[o * n..(o + 1) * n].iter().sum::<f64>();
                }
            }
            if li == 0 && !want_input {
                return None;
            }
            let pad = l.kernel / 2;
            let mut g_padded = vec![0.0; cache.padded.len()];
            conv_input_grad(w, &g_pre, &mut g_padded, l, rows, cols);
            g_post = unpad_grad(&g_padded, l.in_channels, rows, cols, pad);
        }
        Some(g_post)
    }
}

/// Lays out `(C, rows, cols)` as `(C, rows + 2p, cols + 2p)` with zero rows
/// above/below and wrapped columns left/right.
fn pad_input(x: &[f64], channels: usize, rows: usize, cols: usize, pad: usize) -> Vec<f64> {
    let pr = rows + 2 * pad;
    let pc = cols + 2 * pad;
    let mut out = vec![0.0; channels * pr * pc];
    for c in 0..channels {
        for y in 0..rows {
            let src = &x[(c * rows + y) * cols..(c * rows + y + 1) * cols];
            let dst = &mut out[(c * pr + y + pad) * pc..(c * pr + y + pad + 1) * pc];
            for (px, d) in dst.iter_mut().enumerate() {
                let col = (px + cols * (pad / cols + 1) - pad) % cols;
                *d = src[col];
            }
        }
    }
    out
}

/// Adjoint of [`pad_input`].
fn unpad_grad(gp: &[f64], channels: usize, rows: usize, cols: usize, pad: usize) -> Vec<f64> {
    let pr = rows + 2 * pad;
    let pc = cols + 2 * pad;
    let mut out = vec![0.0; channels * rows * cols];
    for c in 0..channels {
        for y in 0..rows {
            let src = &gp[(c * pr + y + pad) * pc..(c * pr + y + pad + 1) * pc];
            let dst = &mut out[(c * rows + y) * cols..(c * rows + y + 1) * cols];
            for (px, g) in src.iter().enumerate() {
                let col = (px + cols * (pad / cols + 1) - pad) % cols;
                dst[col] += g;
            }
        }
    }
    out
}

fn conv_forward(
    padded: &[f64],
    w: &[f64],
    b: &[f64],
    out: &mut [f64],
    l: &LayerSpec,
    rows: usize,
    cols: usize,
) {
    let k = l.kernel;
    let pad = k / 2;
    let pr = rows + 2 * pad;
    let pc = cols + 2 * pad;
    let n = rows * cols;
    for o in 0..l.out_channels {
        let plane = &mut out[o * n..(o + 1) * n];
        plane.fill(b[o]);
        for c in 0..l.in_channels {
            let src_plane = &padded[c * pr * pc..(c + 1) * pr * pc];
            let wk = &w[((o * l.in_channels) + c) * k * k..((o * l.in_channels) + c + 1) * k * k];
            for y in 0..rows {
                let dst = &mut plane[y * cols..(y + 1) * cols];
                for ky in 0..k {
                    let row = &src_plane[(y + ky) * pc..(y + ky + 1) * pc];
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        let src = &row[kx..kx + cols];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

fn conv_input_grad(
    w: &[f64],
    g_out: &[f64],
    g_padded: &mut [f64],
    l: &LayerSpec,
    rows: usize,
    cols: usize,
) {
    let k = l.kernel;
    let pad = k / 2;
    let pr = rows + 2 * pad;
    let pc = cols + 2 * pad;
    let n = rows * cols;
    for c in 0..l.in_channels {
        let dst_plane = &mut g_padded[c * pr * pc..(c + 1) * pr * pc];
        for o in 0..l.out_channels {
            let gplane = &g_out[o * n..(o + 1) * n];
            let wk = &w[((o * l.in_channels) + c) * k * k..((o * l.in_channels) + c + 1) * k * k];
            for y in 0..rows {
                let src = &gplane[y * cols..(y + 1) * cols];
                for ky in 0..k {
                    let row = &mut dst_plane[(y + ky) * pc..(y + ky + 1) * pc];
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        for (d, s) in row[kx..kx + cols].iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

fn conv_weight_grad(
    padded: &[f64],
    g_out: &[f64],
    gw: &mut [f64],
    l: &LayerSpec,
    rows: usize,
    cols: usize,
) {
    let k = l.kernel;
    let pad = k / 2;
    let pr = rows + 2 * pad;
    let pc = cols + 2 * pad;
    let n = rows * cols;
    for o in 0..l.out_channels {
        let gplane = &g_out[o * n..(o + 1) * n];
        for c in 0..l.in_channels {
            let src_plane = &padded[c * pr * pc..(c + 1) * pr * pc];
            let base = ((o * l.in_channels) + c) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..rows {
                        let g = &gplane[y * cols..(y + 1) * cols];
                        let s = &src_plane[(y + ky) * pc + kx..(y + ky) * pc + kx + cols];
                        acc += dot(g, s);
                    }
                    gw[base + ky * k + kx] += acc;
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Per-cell focusing exponent for the focal loss.
#[derive(Debug, Clone, Copy)]
pub enum Gamma<'a> {
    Uniform(f64),
    PerCell(&'a Volume),
}

impl Gamma<'_> {
    fn at(&self, t: usize, k: usize) -> f64 {
        match self {
            Gamma::Uniform(g) => *g,
            Gamma::PerCell(v) => v.plane(t)[k],
        }
    }
}

/// Focal term of one cell and its derivative with respect to the
/// probability:
/// `-[(1-p)^g z ln p + p^g (1-z) ln(1-p)]`.
pub fn focal_cell(p: f64, z: f64, gamma: f64) -> (f64, f64) {
    let clamped = !(P_CLAMP..=1.0 - P_CLAMP).contains(&p);
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let q = 1.0 - p;
    let (lp, lq) = (p.ln(), q.ln());
    let (fq, fp) = if gamma == 0.0 {
        (1.0, 1.0)
    } else {
        (q.powf(gamma), p.powf(gamma))
    };
    let loss = -(fq * z * lp + fp * (1.0 - z) * lq);
    if clamped {
        return (loss, 0.0);
    }
    // d/dp of (1-p)^g ln p and p^g ln(1-p)
    let (dq, dp) = if gamma == 0.0 {
        (0.0, 0.0)
    } else {
        (
            -gamma * q.powf(gamma - 1.0),
            gamma * p.powf(gamma - 1.0),
        )
    };
    let d_pos = dq * lp + fq / p;
    let d_neg = dp * lq - fp / q;
    (loss, -(z * d_pos + (1.0 - z) * d_neg))
}

/// Mean-over-time focal loss with a constant exponent of 2.
pub fn focal_loss(p: &Volume, z: &Volume) -> Result<f64, SurrogateError> {
    focal_loss_with(p, z, Gamma::Uniform(2.0))
}

pub fn focal_loss_with(p: &Volume, z: &Volume, gamma: Gamma<'_>) -> Result<f64, SurrogateError> {
    if !p.same_shape(z) {
        return Err(SurrogateError::Shape("probabilities and labels differ in shape"));
    }
    if let Gamma::PerCell(g) = gamma {
        if !g.same_shape(p) {
            return Err(SurrogateError::Shape("gamma map differs in shape"));
        }
    }
    let mut total = 0.0;
    for t in 0..p.times {
        for (k, (&pp, &zz)) in p.plane(t).iter().zip(z.plane(t)).enumerate() {
            total += focal_cell(pp, zz, gamma.at(t, k)).0;
        }
    }
    Ok(total / p.times as f64)
}

/// Focal loss of the surrogate on `x` and its exact gradient with respect
/// to the input tensor (same layout as `x.data()`).
pub fn grad_input(
    m: &SurrogateModel,
    x: &DetectorInputs,
    target: &Volume,
    gamma: Gamma<'_>,
) -> Result<(f64, Vec<f64>), SurrogateError> {
    let g = x.geometry();
    let (rows, cols) = (g.rows, g.cols);
    if target.times != x.times() || target.rows != rows || target.cols != cols {
        return Err(SurrogateError::Shape("target does not match input"));
    }
    if let Gamma::PerCell(gm) = gamma {
        if !gm.same_shape(target) {
            return Err(SurrogateError::Shape("gamma map differs in shape"));
        }
    }
    let beta = x.times() as f64;
    let n = rows * cols;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(x.data().len());
    for t in 0..x.times() {
        let snap = x.snapshot(t);
        m.check_input(snap, rows, cols)?;
        let pass = m.forward_pass(snap, rows, cols);
        let logits = &pass.caches.last().unwrap().post;
        let mut dlogit = vec![0.0; n];
        let zt = target.plane(t);
        for k in 0..n {
            let p = sigmoid(logits[k]);
            let (l, dp) = focal_cell(p, zt[k], gamma.at(t, k));
            loss += l;
            dlogit[k] = dp * p * (1.0 - p) / beta;
        }
        let gx = m
            .backward(&pass, &dlogit, rows, cols, None, true)
            .expect("input gradient requested");
        grad.extend_from_slice(&gx);
    }
    Ok((loss / beta, grad))
}

/// One training pair: a standardized snapshot `(C, rows, cols)` and its
/// soft label `(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub rows: usize,
    pub cols: usize,
    pub input: Vec<f64>,
    pub label: Vec<f64>,
}

impl Sample {
    /// Splits a sequence and its labels into per-time samples.
    pub fn from_sequence(x: &DetectorInputs, labels: &Volume) -> Result<Vec<Sample>, SurrogateError> {
        let g = x.geometry();
        if labels.times != x.times() || labels.rows != g.rows || labels.cols != g.cols {
            return Err(SurrogateError::Shape("labels do not match inputs"));
        }
        Ok((0..x.times())
            .map(|t| Sample {
                rows: g.rows,
                cols: g.cols,
                input: x.snapshot(t).to_vec(),
                label: labels.plane(t).to_vec(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Focal loss with exponent 2.
    Focal,
    /// Plain binary cross-entropy (exponent 0).
    CrossEntropy,
}

impl LossKind {
    pub fn gamma(self) -> f64 {
        match self {
            LossKind::Focal => 2.0,
            LossKind::CrossEntropy => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5.92e-4,
            adam_beta1: 0.9101,
            adam_beta2: 0.9119,
            adam_eps: 1e-8,
            weight_decay: 6.48e-6,
            epochs: 77,
            batch_size: 8,
            seed: 0,
            loss: LossKind::Focal,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(SurrogateError::Config("learning rate must be positive"));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(SurrogateError::Config("betas must lie in (0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return Err(SurrogateError::Config("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub model: SurrogateModel,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// Bias-corrected update directions `m_hat / (sqrt(v_hat) + eps)`,
    /// written into `dir`.
    pub fn direction(&mut self, grad: &[f64], dir: &mut [f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for k in 0..grad.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            dir[k] = mh / (vh.sqrt() + self.eps);
        }
    }
}

fn batch_loss_grad(
    m: &SurrogateModel,
    batch: &[&Sample],
    gamma: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = grad;
    for s in batch {
        let n = s.rows * s.cols;
        let pass = m.forward_pass(&s.input, s.rows, s.cols);
        let logits = &pass.caches.last().unwrap().post;
        let mut dlogit = vec![0.0; n];
        for k in 0..n {
            let p = sigmoid(logits[k]);
            let (l, dp) = focal_cell(p, s.label[k], gamma);
            total += l;
            dlogit[k] = dp * p * (1.0 - p) * scale;
        }
        if let Some(g) = grad.as_deref_mut() {
            m.backward(&pass, &dlogit, s.rows, s.cols, Some(g), false);
        }
    }
    total * scale
}

/// Mean per-snapshot loss over a dataset.
pub fn dataset_loss(m: &SurrogateModel, data: &[Sample], loss: LossKind) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let refs: Vec<&Sample> = data.iter().collect();
    batch_loss_grad(m, &refs, loss.gamma(), None)
}

/// Minibatch Adam training. Returns the parameters with the lowest
/// validation loss (training loss when `val` is empty).
pub fn train(
    init: SurrogateModel,
    train_set: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, SurrogateError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(SurrogateError::EmptyDataset);
    }
    let cin = init.arch.in_channels();
    for s in train_set.iter().chain(val) {
        if s.input.len() != cin * s.rows * s.cols || s.label.len() != s.rows * s.cols {
            return Err(SurrogateError::Shape("sample does not match architecture"));
        }
    }
    let gamma = cfg.loss.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init;
    let np = model.params.len();
    let mut adam = Adam::new(np, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut grad = vec![0.0; np];
    let mut dir = vec![0.0; np];
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let score = |m: &SurrogateModel, train_loss: f64| {
        if val.is_empty() {
            train_loss
        } else {
            dataset_loss(m, val, cfg.loss)
        }
    };
    let initial_train = dataset_loss(&model, train_set, cfg.loss);
    let mut best = (score(&model, initial_train), 0usize, model.clone());
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        // Fisher-Yates with the seeded stream
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &train_set[k]).collect();
            grad.fill(0.0);
            let l = batch_loss_grad(&model, &batch, gamma, Some(&mut grad));
            if !l.is_finite() {
                return Err(SurrogateError::Diverged { epoch, loss: l });
            }
            sum += l;
            batches += 1;
            for (g, p) in grad.iter_mut().zip(&model.params) {
                *g += cfg.weight_decay * p;
            }
            adam.direction(&grad, &mut dir);
            for (p, d) in model.params.iter_mut().zip(&dir) {
                *p -= cfg.learning_rate * d;
            }
        }
        let train_loss = sum / batches as f64;
        let val_loss = score(&model, train_loss);
        if !val_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(SurrogateError::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.1,
        history,
    })
}

/// Input gradient of an arbitrary per-logit loss gradient; used by tests
/// and by callers composing their own objectives.
pub fn backprop_logits(
    m: &SurrogateModel,
    x: &[f64],
    rows: usize,
    cols: usize,
    dlogit: &[f64],
) -> Result<Vec<f64>, SurrogateError> {
    m.check_input(x, rows, cols)?;
    if dlogit.len() != rows * cols {
        return Err(SurrogateError::Shape("logit gradient does not match grid"));
    }
    let pass = m.forward_pass(x, rows, cols);
    Ok(m.backward(&pass, dlogit, rows, cols, None, true).unwrap())
}

/// Parameter gradient of the batch loss; exposed for gradient checks.
pub fn param_grad(m: &SurrogateModel, batch: &[Sample], loss: LossKind) -> (f64, Vec<f64>) {
    let refs: Vec<&Sample> = batch.iter().collect();
    let mut g = vec![0.0; m.params.len()];
    let l = batch_loss_grad(m, &refs, loss.gamma(), Some(&mut g));
    (l, g)
}
