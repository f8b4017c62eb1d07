//! Targeted attacks on the detector through its surrogate.
//!
//! All methods share the same loop: evaluate the focal loss of the
//! surrogate against the target mask, take a step on the standardized
//! detector inputs and project back into the l-infinity ball of radius
//! `delta` around the original. They differ in the target (dilated or not),
//! the per-cell weights and the update rule.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    apply_input_perturbation, DetectorInputs, FieldError, FieldSequence, StandardizationStats,
};
use crate::geo::{central_angle_rad, GridGeometry};
use crate::labels::{dilate, DilationParams, LabelError};
use crate::surrogate::{focal_cell, grad_input, Adam, Gamma, SurrogateError, SurrogateModel};
use crate::volume::Volume;

/// Channels of the detector inputs the attack may change (elevation is
/// static and stays fixed).
pub const PERTURBED_CHANNELS: [usize; 3] = [
    DetectorInputs::MSL,
    DetectorInputs::WIND,
    DetectorInputs::THICKNESS,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cyc,
    CycNoDilation,
    CycNoWeighting,
    Ala,
    Taaowpf,
    Aowf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// `x -= eta * w * sign(g)`.
    Sign,
    /// Adam moments on the input, `x -= eta * w * m_hat / (sqrt(v_hat) + eps)`.
    Adam,
    /// Sign step with `eta_k = eta * (1 + cos(pi k / K)) / 2`.
    CosineSign,
}

/// What a method switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub dilate: bool,
    pub weight: bool,
    pub rule: UpdateRule,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cyc,
        Method::CycNoDilation,
        Method::CycNoWeighting,
        Method::Ala,
        Method::Taaowpf,
        Method::Aowf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cyc => "cyc",
            Method::CycNoDilation => "cyc-no-dilation",
            Method::CycNoWeighting => "cyc-no-weighting",
            Method::Ala => "ala",
            Method::Taaowpf => "taaowpf",
            Method::Aowf => "aowf",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, AttackError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or(AttackError::UnknownMethod)
    }

    pub fn variant(self) -> Variant {
        let v = |dilate, weight, rule| Variant {
            dilate,
            weight,
            rule,
        };
        match self {
            Method::Cyc => v(true, true, UpdateRule::Sign),
            Method::CycNoDilation => v(false, true, UpdateRule::Sign),
            Method::CycNoWeighting => v(true, false, UpdateRule::Sign),
            Method::Ala => v(false, false, UpdateRule::Adam),
            Method::Taaowpf => v(false, false, UpdateRule::Sign),
            Method::Aowf => v(false, false, UpdateRule::CosineSign),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("unknown attack method")]
    UnknownMethod,
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("non-finite loss at iteration {iter}")]
    NonFinite { iter: usize, trace: Vec<TraceRow> },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub eta: f64,
    /// Radius of the l-infinity ball, standardized units.
    pub delta: f64,
    pub iters: usize,
    pub lambda_reg: f64,
    pub sigma_grad_deg: f64,
    pub sigma_reg_deg: f64,
    pub dilation: DilationParams,
    pub method: Method,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Binarization threshold for the surrogate output.
    pub threshold: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            delta: 10.0,
            iters: 1000,
            lambda_reg: 0.1,
            sigma_grad_deg: 5.0,
            sigma_reg_deg: 5.0,
            dilation: DilationParams::attack(),
            method: Method::Cyc,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            threshold: 0.5,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.eta) || !nonneg(self.delta) || !nonneg(self.lambda_reg) {
            return Err(AttackError::Config("eta, delta and lambda must be non-negative"));
        }
        if !pos(self.sigma_grad_deg) || !pos(self.sigma_reg_deg) {
            return Err(AttackError::Config("sigmas must be positive"));
        }
        if !(self.dilation.sigma > 0.0) {
            return Err(AttackError::Config("dilation sigma must be positive"));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(AttackError::Config("adam betas must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// `M = 1(Z* != Z) * 1(threshold(P0) == Z*)`.
pub fn calibration_mask(
    z_star: &Volume,
    z: &Volume,
    p0: &Volume,
    threshold: f64,
) -> Result<Volume, AttackError> {
    if !z_star.same_shape(z) || !z_star.same_shape(p0) {
        return Err(AttackError::Shape("calibration inputs differ in shape"));
    }
    let mut m = Volume::zeros(z.times, z.rows, z.cols);
    for k in 0..m.data.len() {
        let pred = if p0.data[k] >= threshold { 1.0 } else { 0.0 };
        if z_star.data[k] != z.data[k] && pred == z_star.data[k] {
            m.data[k] = 1.0;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceWeights {
    pub w_grad: Volume,
    pub w_reg: Volume,
}

/// Gradient and regularization weights from the great-circle distance (in
/// radians) of each cell to the nearest target cell of its time step.
pub fn distance_weights(
    z_star: &Volume,
    g: &GridGeometry,
    sigma_grad_rad: f64,
    sigma_reg_rad: f64,
) -> Result<DistanceWeights, AttackError> {
    if z_star.rows != g.rows || z_star.cols != g.cols {
        return Err(AttackError::Shape("mask does not match geometry"));
    }
    let mut w_grad = Volume::filled(z_star.times, g.rows, g.cols, 1.0);
    let mut w_reg = Volume::zeros(z_star.times, g.rows, g.cols);
    for t in 0..z_star.times {
        let targets: Vec<_> = (0..g.cells())
            .filter(|&k| z_star.plane(t)[k] >= 0.5)
            .map(|k| g.point(k / g.cols, k % g.cols))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let zt = z_star.plane(t);
        let (sg2, sr2) = (
            2.0 * sigma_grad_rad * sigma_grad_rad,
            2.0 * sigma_reg_rad * sigma_reg_rad,
        );
        for k in 0..g.cells() {
            if zt[k] >= 0.5 {
                continue;
            }
            let p = g.point(k / g.cols, k % g.cols);
            let d = targets
                .iter()
                .map(|q| central_angle_rad(p, *q))
                .fold(f64::INFINITY, f64::min);
            w_grad.plane_mut(t)[k] = (-(d * d) / sg2).exp();
            w_reg.plane_mut(t)[k] = 1.0 - (-(d * d) / sr2).exp();
        }
    }
    Ok(DistanceWeights { w_grad, w_reg })
}

/// `M = 1` cells use exponent 0, the rest exponent 2.
pub fn gamma_map(m: &Volume) -> Volume {
    let mut g = m.clone();
    for x in &mut g.data {
        *x = if *x == 1.0 { 0.0 } else { 2.0 };
    }
    g
}

/// `lambda * sum w_reg (x0 - x)^2` over the perturbed channels.
pub fn regularizer(x0: &DetectorInputs, x: &DetectorInputs, w_reg: &Volume, lambda: f64) -> f64 {
    let mut acc = 0.0;
    for t in 0..x.times() {
        let w = w_reg.plane(t);
        for &c in &PERTURBED_CHANNELS {
            for ((a, b), wk) in x0.channel(t, c).iter().zip(x.channel(t, c)).zip(w) {
                let d = wk * (a - b);
                acc += d * d;
            }
        }
    }
    lambda * acc
}

/// Full adversarial objective: the mean-over-time focal term with the
/// calibration-controlled exponents plus the weighted regularizer.
#[allow(clippy::too_many_arguments)]
pub fn adv_loss(
    p: &Volume,
    target: &Volume,
    m: &Volume,
    w_reg: &Volume,
    x0: &DetectorInputs,
    x: &DetectorInputs,
    lambda: f64,
) -> Result<f64, AttackError> {
    if !p.same_shape(target) || !p.same_shape(m) || !p.same_shape(w_reg) {
        return Err(AttackError::Shape("loss inputs differ in shape"));
    }
    if !x0.fields().same_shape(x.fields()) || x.times() != p.times {
        return Err(AttackError::Shape("fields differ in shape"));
    }
    let mut focal = 0.0;
    for k in 0..p.data.len() {
        let gamma = if m.data[k] == 1.0 { 0.0 } else { 2.0 };
        focal += focal_cell(p.data[k], target.data[k], gamma).0;
    }
    Ok(focal / p.times as f64 + regularizer(x0, x, w_reg, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Loss at the iterate the step was taken from.
    pub loss: f64,
    /// `max |x - x0|` after the step.
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// Adversarial standardized inputs.
    pub adversarial: DetectorInputs,
    pub trace: Vec<TraceRow>,
    pub calibration: Volume,
}

/// Step size of the cosine schedule at iteration `k` of `total`.
pub fn cosine_eta(eta: f64, k: usize, total: usize) -> f64 {
    if total == 0 {
        return eta;
    }
    eta * 0.5 * (1.0 + (core::f64::consts::PI * k as f64 / total as f64).cos())
}

fn next_toward(x: f64, target: f64) -> f64 {
    if x == target {
        return x;
    }
    let bits = x.to_bits();
    let up = (x < target) == (x > 0.0);
    let nb = if x == 0.0 {
        // smallest subnormal with the sign of the direction
        if target > 0.0 {
            1
        } else {
            (1u64 << 63) | 1
        }
    } else if up {
        bits + 1
    } else {
        bits - 1
    };
    f64::from_bits(nb)
}

/// Projection onto `[x0 - delta, x0 + delta]` that holds exactly in
/// floating point: `|result - x0| <= delta`.
pub fn project(x0: f64, x: f64, delta: f64) -> f64 {
    let mut y = x0 + (x - x0).clamp(-delta, delta);
    while (y - x0).abs() > delta {
        y = next_toward(y, x0);
    }
    y
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the configured method. `x0` are standardized detector inputs, `z`
/// the detector's mask on the original, `z_star` the binary target.
pub fn run_attack(
    x0: &DetectorInputs,
    z: &Volume,
    z_star: &Volume,
    model: &SurrogateModel,
    cfg: &AttackConfig,
) -> Result<AttackOutcome, AttackError> {
    run_attack_observed(x0, z, z_star, model, cfg, |_, _| {})
}

/// [`run_attack`] with a callback receiving every iterate after its
/// projection.
pub fn run_attack_observed(
    x0: &DetectorInputs,
    z: &Volume,
    z_star: &Volume,
    model: &SurrogateModel,
    cfg: &AttackConfig,
    observe: impl FnMut(usize, &DetectorInputs),
) -> Result<AttackOutcome, AttackError> {
    run_attack_variant(x0, z, z_star, model, cfg, cfg.method.variant(), observe)
}

/// The attack loop with the switches given explicitly; `cfg.method` is
/// ignored.
pub fn run_attack_variant(
    x0: &DetectorInputs,
    z: &Volume,
    z_star: &Volume,
    model: &SurrogateModel,
    cfg: &AttackConfig,
    variant: Variant,
    mut observe: impl FnMut(usize, &DetectorInputs),
) -> Result<AttackOutcome, AttackError> {
    cfg.validate()?;
    let g = *x0.geometry();
    if z_star.times != x0.times() || z_star.rows != g.rows || z_star.cols != g.cols {
        return Err(AttackError::Shape("target does not match inputs"));
    }
    if !z.same_shape(z_star) {
        return Err(AttackError::Shape("original mask does not match target"));
    }
    if !z_star.is_binary() || !z.is_binary() {
        return Err(AttackError::Shape("masks must be binary"));
    }
    let p0 = model.forward(x0)?;
    let m = calibration_mask(z_star, z, &p0, cfg.threshold)?;
    let gammas = gamma_map(&m);
    let target = if variant.dilate {
        dilate(z_star, &cfg.dilation, g.is_periodic())?
    } else {
        z_star.clone()
    };
    let weights = if variant.weight {
        distance_weights(
            z_star,
            &g,
            cfg.sigma_grad_deg.to_radians(),
            cfg.sigma_reg_deg.to_radians(),
        )?
    } else {
        DistanceWeights {
            w_grad: Volume::filled(z.times, z.rows, z.cols, 1.0),
            w_reg: Volume::zeros(z.times, z.rows, z.cols),
        }
    };
    let use_reg = variant.weight && cfg.lambda_reg > 0.0;

    let n = g.cells();
    let mut x = x0.clone();
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut adam = match variant.rule {
        UpdateRule::Adam => Some(Adam::new(
            x0.data().len(),
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        )),
        _ => None,
    };
    let mut dir = vec![0.0; x0.data().len()];

    for k in 0..cfg.iters {
        let (focal, mut grad) = grad_input(model, &x, &target, Gamma::PerCell(&gammas))?;
        let mut loss = focal;
        if use_reg {
            loss += regularizer(x0, &x, &weights.w_reg, cfg.lambda_reg);
            for t in 0..x.times() {
                let wr = weights.w_reg.plane(t);
                for &c in &PERTURBED_CHANNELS {
                    let off = (t * DetectorInputs::CHANNELS + c) * n;
                    let a = &x0.data()[off..off + n];
                    let b = &x.data()[off..off + n];
                    for q in 0..n {
                        grad[off + q] += 2.0 * cfg.lambda_reg * wr[q] * wr[q] * (b[q] - a[q]);
                    }
                }
            }
        }
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(AttackError::NonFinite { iter: k, trace });
        }

        let eta = match variant.rule {
            UpdateRule::CosineSign => cosine_eta(cfg.eta, k, cfg.iters),
            _ => cfg.eta,
        };
        match adam.as_mut() {
            Some(a) => a.direction(&grad, &mut dir),
            None => {
                for (d, g) in dir.iter_mut().zip(&grad) {
                    *d = if *g > 0.0 {
                        1.0
                    } else if *g < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
        }

        let orig = x0.data();
        let xs = x.data_mut();
        for t in 0..z.times {
            let wg = weights.w_grad.plane(t);
            for &c in &PERTURBED_CHANNELS {
                let off = (t * DetectorInputs::CHANNELS + c) * n;
                for q in 0..n {
                    let step = eta * wg[q] * dir[off + q];
                    if step != 0.0 {
                        let i = off + q;
                        xs[i] = project(orig[i], xs[i] - step, cfg.delta);
                    }
                }
            }
        }
        trace.push(TraceRow {
            iteration: k,
            loss,
            linf: max_abs_diff(x.data(), x0.data()),
        });
        observe(k, &x);
    }
    Ok(AttackOutcome {
        adversarial: x,
        trace,
        calibration: m,
    })
}

/// Maps adversarial standardized inputs back onto the physical sequence
/// they came from: the perturbation is scaled by the per-channel standard
/// deviations and applied with [`apply_input_perturbation`].
pub fn to_physical(
    original: &FieldSequence,
    x0: &DetectorInputs,
    x_adv: &DetectorInputs,
    stats: &StandardizationStats,
) -> Result<FieldSequence, AttackError> {
    if !x0.fields().same_shape(x_adv.fields()) {
        return Err(AttackError::Shape("standardized inputs differ in shape"));
    }
    let mut delta = x_adv.clone();
    let n = x0.geometry().cells();
    for t in 0..x0.times() {
        for (c, v) in DetectorInputs::LAYOUT.iter().enumerate() {
            let sd = stats.std_of(*v)?;
            let a = x0.channel(t, c);
            let out = delta.channel_mut(t, c);
            for q in 0..n {
                out[q] = (out[q] - a[q]) * sd;
            }
        }
    }
    Ok(apply_input_perturbation(original, &delta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Variable;
    use crate::surrogate::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridGeometry {
        GridGeometry::new(6, 8, 10.0, 100.0, 1.0).unwrap()
    }

    fn inputs(times: usize, seed: u64) -> DetectorInputs {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..times * 4 * g.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        DetectorInputs::new(
            FieldSequence::new(g, times, DetectorInputs::LAYOUT.to_vec(), data).unwrap(),
        )
        .unwrap()
    }

    fn masks(times: usize) -> (Volume, Volume) {
        let g = grid();
        let mut z = Volume::zeros(times, g.rows, g.cols);
        let mut zs = Volume::zeros(times, g.rows, g.cols);
        for t in 0..times {
            z.set(t, 3, 2 + t % 3, 1.0);
            zs.set(t, 2, 5 - t % 3, 1.0);
        }
        (z, zs)
    }

    fn model() -> SurrogateModel {
        SurrogateModel::init(Architecture::three_layer(4, 4), 5, -1.0).unwrap()
    }

    #[test]
    fn calibration_examples() {
        let (z, _) = masks(2);
        let p = Volume::filled(2, 6, 8, 0.2);
        assert_eq!(calibration_mask(&z, &z, &p, 0.5).unwrap().sum(), 0.0);
        let mut zs = Volume::zeros(1, 1, 2);
        zs.data = vec![1.0, 1.0];
        let z0 = Volume::zeros(1, 1, 2);
        let mut p0 = Volume::zeros(1, 1, 2);
        p0.data = vec![0.9, 0.1];
        assert_eq!(calibration_mask(&zs, &z0, &p0, 0.5).unwrap().data, vec![1.0, 0.0]);
    }

    #[test]
    fn weight_examples() {
        let g = GridGeometry::new(1, 4, 0.0, 0.0, 90.0).unwrap();
        let mut zs = Volume::zeros(2, 1, 4);
        zs.set(0, 0, 0, 1.0);
        let w = distance_weights(&zs, &g, core::f64::consts::PI / 6.0, 1.0).unwrap();
        assert_eq!((w.w_grad.get(0, 0, 0), w.w_reg.get(0, 0, 0)), (1.0, 0.0));
        let expect = (-4.5f64).exp();
        assert!((w.w_grad.get(0, 0, 1) - expect).abs() < 1e-12);
        assert!((w.w_grad.get(0, 0, 1) - 0.011109).abs() < 1e-6);
        // empty target step
        assert!(w.w_grad.plane(1).iter().all(|&v| v == 1.0));
        assert!(w.w_reg.plane(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn regularizer_scalar_case() {
        let x0 = inputs(1, 1);
        let mut x = x0.clone();
        x.channel_mut(0, DetectorInputs::MSL)[7] -= 0.5;
        let mut wr = Volume::zeros(1, 6, 8);
        wr.data[7] = 1.0;
        assert!((regularizer(&x0, &x, &wr, 2.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_at_target() {
        let x0 = inputs(1, 2);
        let mut p = Volume::filled(1, 6, 8, 1e-9);
        let mut target = Volume::zeros(1, 6, 8);
        p.data[3] = 1.0 - 1e-9;
        target.data[3] = 1.0;
        let zero = Volume::zeros(1, 6, 8);
        let l = adv_loss(&p, &target, &zero, &zero, &x0, &x0, 0.1).unwrap();
        assert!(l < 1e-6);
        // an M = 1 cell is plain cross-entropy
        let half = Volume::filled(1, 1, 1, 0.5);
        let one = Volume::filled(1, 1, 1, 1.0);
        let xs = DetectorInputs::new(
            FieldSequence::zeros(GridGeometry::new(1, 1, 0.0, 0.0, 1.0).unwrap(), 1, DetectorInputs::LAYOUT.to_vec()),
        )
        .unwrap();
        let l = adv_loss(&half, &one, &one, &Volume::zeros(1, 1, 1), &xs, &xs, 0.0).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()).unwrap(), m);
        }
        assert_eq!(Method::from_name("pgd"), Err(AttackError::UnknownMethod));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_eta(0.01, 0, 100), 0.01);
        assert!(cosine_eta(0.01, 100, 100).abs() < 1e-18);
    }

    #[test]
    fn projection_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x0: f64 = rng.random_range(-1e3..1e3);
            let x: f64 = rng.random_range(-1e3..1e3);
            let d: f64 = rng.random_range(0.0..5.0);
            let y = project(x0, x, d);
            assert!((y - x0).abs() <= d);
        }
        assert_eq!(project(0.3, 5.0, 0.0), 0.3);
    }

    #[test]
    fn single_sign_step() {
        // one step from 0 with positive gradient sign moves to -eta
        let x0 = 0.0;
        let y = project(x0, x0 - 0.01 * 1.0 * 1.0, 10.0);
        assert_eq!(y, -0.01);
    }

    #[test]
    fn zero_iterations_and_zero_delta_are_identity() {
        let x0 = inputs(2, 4);
        let (z, zs) = masks(2);
        let m = model();
        for method in Method::ALL {
            let cfg = AttackConfig {
                iters: 0,
                method,
                ..AttackConfig::default()
            };
            assert_eq!(run_attack(&x0, &z, &zs, &m, &cfg).unwrap().adversarial, x0);
            let cfg = AttackConfig {
                iters: 5,
                delta: 0.0,
                method,
                ..AttackConfig::default()
            };
            let out = run_attack(&x0, &z, &zs, &m, &cfg).unwrap();
            assert_eq!(out.adversarial, x0);
        }
    }

    #[test]
    fn stays_in_ball_and_leaves_elevation() {
        let x0 = inputs(2, 5);
        let (z, zs) = masks(2);
        let m = model();
        for method in Method::ALL {
            let cfg = AttackConfig {
                iters: 15,
                eta: 0.2,
                delta: 0.5,
                method,
                ..AttackConfig::default()
            };
            run_attack_observed(&x0, &z, &zs, &m, &cfg, |_, x| {
                assert!(max_abs_diff(x.data(), x0.data()) <= 0.5);
                for t in 0..2 {
                    assert_eq!(x.elevation(t), x0.elevation(t));
                }
            })
            .unwrap();
        }
    }

    #[test]
    fn ablations_combined_equal_taaowpf() {
        let x0 = inputs(2, 6);
        let (z, zs) = masks(2);
        let m = model();
        let cfg = AttackConfig {
            iters: 10,
            eta: 0.05,
            method: Method::Taaowpf,
            ..AttackConfig::default()
        };
        let mut a_iters = Vec::new();
        let a = run_attack_observed(&x0, &z, &zs, &m, &cfg, |_, x| a_iters.push(x.clone())).unwrap();
        let both_off = Variant {
            dilate: Method::CycNoDilation.variant().dilate,
            weight: Method::CycNoWeighting.variant().weight,
            rule: Method::Cyc.variant().rule,
        };
        let mut b_iters = Vec::new();
        let cyc = AttackConfig {
            method: Method::Cyc,
            ..cfg
        };
        let b = run_attack_variant(&x0, &z, &zs, &m, &cyc, both_off, |_, x| b_iters.push(x.clone()))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a_iters, b_iters);
    }

    #[test]
    fn zero_gradient_leaves_adam_in_place() {
        let mut m = model();
        let n = m.params.len();
        for p in &mut m.params[..n - 1] {
            *p = 0.0;
        }
        let x0 = inputs(1, 7);
        let (z, zs) = masks(1);
        let cfg = AttackConfig {
            iters: 5,
            method: Method::Ala,
            ..AttackConfig::default()
        };
        assert_eq!(run_attack(&x0, &z, &zs, &m, &cfg).unwrap().adversarial, x0);
    }

    #[test]
    fn to_physical_with_no_change_is_identity() {
        let x0 = inputs(1, 8);
        let stats = StandardizationStats::new(
            DetectorInputs::LAYOUT.to_vec(),
            vec![0.0; 4],
            vec![100.0, 2.0, 30.0, 1.0],
        )
        .unwrap();
        let raw = crate::fields::FieldSequence::zeros(
            grid(),
            1,
            vec![
                Variable::Msl,
                Variable::U10,
                Variable::V10,
                Variable::Z300,
                Variable::Z500,
                Variable::SurfaceGeopotential,
            ],
        );
        assert_eq!(to_physical(&raw, &x0, &x0, &stats).unwrap(), raw);
    }
}
