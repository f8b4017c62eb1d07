//! Whole-pipeline helpers shared by the command-line driver and the
//! acceptance suite: suites of synthetic scenarios, surrogate training on
//! their detector masks, and per-scenario attack runs scored by re-running
//! the detector on the adversarial forecast.

use serde::{Deserialize, Serialize};
use tcsteer_core::attack::{self, AttackConfig, AttackOutcome, Variant};
use tcsteer_core::detector::{self, Detection, DetectorConfig};
use tcsteer_core::fields::{self, DetectorInputs, FieldSequence, StandardizationStats, STANDARD_GRAVITY};
use tcsteer_core::labels::{self, DilationParams};
use tcsteer_core::metrics::{self, LocationRates, TrajectoryScores};
use tcsteer_core::surrogate::{self, Architecture, Sample, SurrogateModel, TrainConfig, TrainOutcome};
use tcsteer_core::synth::{self, SuiteParams};
use tcsteer_core::targetgen::{self, TargetGenParams};
use tcsteer_core::track::Trajectory;
use tcsteer_core::volume::Volume;

use crate::error::{Error, Result};

/// Standard deviations below this are treated as constant channels.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub index: u64,
    pub fields: FieldSequence,
    /// Physical detector inputs.
    pub inputs: DetectorInputs,
    pub detection: Detection,
}

impl Scenario {
    pub fn new(index: u64, fields: FieldSequence, det: &DetectorConfig) -> Result<Self> {
        let inputs = fields::derive_inputs(&fields, STANDARD_GRAVITY)?;
        let detection = detector::detect(&inputs, det);
        Ok(Self {
            index,
            fields,
            inputs,
            detection,
        })
    }
}

/// The first `count` suite scenarios (drawn from `seed`) on which the
/// detector finds exactly one track whose default target stays on the
/// lattice.
pub fn build_suite(
    params: &SuiteParams,
    seed: u64,
    count: usize,
    det: &DetectorConfig,
    target: &TargetGenParams,
) -> Result<Vec<Scenario>> {
    let mut out = Vec::with_capacity(count);
    let mut index = 0u64;
    while out.len() < count {
        if index as usize >= 10 * count + 10 {
            return Err(Error::Numeric(format!(
                "only {} of {count} suite scenarios usable after {index} draws",
                out.len()
            )));
        }
        let spec = synth::suite_scenario(params, seed, index);
        let (fields, _) = synth::synth_scenario(&spec)?;
        let sc = Scenario::new(index, fields, det)?;
        index += 1;
        if sc.detection.tracks.len() == 1 && Target::new(&sc, target).is_ok() {
            out.push(sc);
        }
    }
    Ok(out)
}

pub fn fit_stats(scenarios: &[Scenario]) -> Result<StandardizationStats> {
    let seqs: Vec<&FieldSequence> = scenarios.iter().map(|s| s.inputs.fields()).collect();
    Ok(StandardizationStats::compute(&seqs, STD_FLOOR)?)
}

/// Per-time training samples; labels are the detector masks, dilated when
/// `dilation` is given.
pub fn samples(
    scenarios: &[Scenario],
    stats: &StandardizationStats,
    dilation: Option<DilationParams>,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for sc in scenarios {
        let x = fields::standardize_inputs(&sc.inputs, stats)?;
        let wrap = sc.inputs.geometry().is_periodic();
        let labels = match dilation {
            Some(p) => labels::dilate(&sc.detection.mask, &p, wrap)?,
            None => sc.detection.mask.clone(),
        };
        out.extend(Sample::from_sequence(&x, &labels)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateSetup {
    pub hidden: usize,
    pub init_seed: u64,
    /// Initial output bias; a negative value starts from the empty mask.
    pub output_bias: f64,
    pub train: TrainConfig,
}

impl Default for SurrogateSetup {
    fn default() -> Self {
        Self {
            hidden: 8,
            init_seed: 0,
            output_bias: -4.0,
            train: TrainConfig::default(),
        }
    }
}

pub fn train_surrogate(
    setup: &SurrogateSetup,
    train_set: &[Sample],
    val: &[Sample],
) -> Result<TrainOutcome> {
    let arch = Architecture::three_layer(DetectorInputs::LAYOUT.len(), setup.hidden);
    let init = SurrogateModel::init(arch, setup.init_seed, setup.output_bias)?;
    Ok(surrogate::train(init, train_set, val, &setup.train)?)
}

/// Cellwise rates of the thresholded surrogate against the detector masks.
pub fn cell_rates(
    model: &SurrogateModel,
    scenarios: &[Scenario],
    stats: &StandardizationStats,
    threshold: f64,
) -> Result<LocationRates> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for sc in scenarios {
        let x = fields::standardize_inputs(&sc.inputs, stats)?;
        pred.extend(model.forward(&x)?.threshold(threshold).data);
        truth.extend_from_slice(&sc.detection.mask.data);
    }
    let n = pred.len();
    let pred = Volume::from_vec(1, 1, n, pred).expect("matching length");
    let truth = Volume::from_vec(1, 1, n, truth).expect("matching length");
    Ok(metrics::location_rates(&pred, &truth)?)
}

#[derive(Debug, Clone)]
pub struct Target {
    pub original: Trajectory,
    pub adversarial: Trajectory,
    /// Detector mask on the unperturbed forecast.
    pub z: Volume,
    pub z_star: Volume,
}

impl Target {
    /// Target for the first detected track of `sc`.
    pub fn new(sc: &Scenario, params: &TargetGenParams) -> Result<Self> {
        let original = sc
            .detection
            .tracks
            .first()
            .ok_or_else(|| Error::Numeric("no track to retarget".into()))?
            .clone();
        let adversarial = targetgen::synthesize_adversarial_track(&original, params)?;
        let g = *sc.inputs.geometry();
        let z = sc.detection.mask.clone();
        let z_star = targetgen::replace_track(&z, &original, &adversarial, &g)?;
        Ok(Self {
            original,
            adversarial,
            z,
            z_star,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AttackRun {
    pub outcome: AttackOutcome,
    /// Adversarial forecast in the layout of the scenario's fields.
    pub fields: FieldSequence,
    pub detection: Detection,
    pub scores: TrajectoryScores,
    pub closeness: f64,
}

/// Attacks one scenario and re-runs the detector on the result. Closeness
/// is measured between the standardized detector inputs of the original
/// and of the re-derived adversarial forecast.
pub fn attack_scenario(
    sc: &Scenario,
    target: &Target,
    model: &SurrogateModel,
    stats: &StandardizationStats,
    cfg: &AttackConfig,
    variant: Variant,
    det: &DetectorConfig,
) -> Result<AttackRun> {
    let x0 = fields::standardize_inputs(&sc.inputs, stats)?;
    let outcome =
        attack::run_attack_variant(&x0, &target.z, &target.z_star, model, cfg, variant, |_, _| {})?;
    let adv_fields = attack::to_physical(&sc.fields, &x0, &outcome.adversarial, stats)?;
    let adv_inputs = fields::derive_inputs(&adv_fields, STANDARD_GRAVITY)?;
    let detection = detector::detect(&adv_inputs, det);
    let scores = metrics::trajectory_scores(
        &detection.tracks,
        core::slice::from_ref(&target.adversarial),
        2.0,
        0.5,
    );
    let x_adv = fields::standardize_inputs(&adv_inputs, stats)?;
    let closeness = metrics::closeness(x0.fields(), x_adv.fields())?;
    Ok(AttackRun {
        outcome,
        fields: adv_fields,
        detection,
        scores,
        closeness,
    })
}

/// Pooled efficacy over a suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub dr: f64,
    pub far: f64,
    pub closeness: f64,
    pub targets: usize,
    pub detected: usize,
    pub predictions: usize,
    pub false_alarms: usize,
}

pub fn summarize<'a>(runs: impl IntoIterator<Item = &'a AttackRun>) -> SuiteSummary {
    let mut s = SuiteSummary {
        dr: f64::NAN,
        far: f64::NAN,
        closeness: 0.0,
        targets: 0,
        detected: 0,
        predictions: 0,
        false_alarms: 0,
    };
    let mut n = 0usize;
    for r in runs {
        s.targets += r.scores.n_targets;
        s.detected += r.scores.detected.iter().filter(|d| **d).count();
        s.predictions += r.scores.n_predictions;
        s.false_alarms += r.scores.false_alarms.iter().filter(|f| **f).count();
        s.closeness += r.closeness;
        n += 1;
    }
    if n > 0 {
        s.closeness /= n as f64;
    } else {
        s.closeness = f64::NAN;
    }
    if s.targets > 0 {
        s.dr = s.detected as f64 / s.targets as f64;
    }
    if s.predictions > 0 {
        s.far = s.false_alarms as f64 / s.predictions as f64;
    }
    s
}
