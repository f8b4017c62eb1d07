use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use tcsteer::checkpoint::{self, Checkpoint};
use tcsteer::error::{Error, Result};
use tcsteer::experiment::{self, SurrogateSetup};
use tcsteer::geojson::{self, Role, RoleTrack, TrackSet};
use tcsteer::manifest::{self, RunManifest};
use tcsteer::{svg, wfld};
use tcsteer_core::attack::{self, AttackConfig, Method};
use tcsteer_core::detector::{self, DetectorConfig};
use tcsteer_core::fields::{self, DetectorInputs, Variable, STANDARD_GRAVITY};
use tcsteer_core::labels::{self, DilationParams};
use tcsteer_core::metrics::{self, TrajectoryScores};
use tcsteer_core::stealth::{self, DetectorKind, StealthParams};
use tcsteer_core::surrogate::{LossKind, Sample};
use tcsteer_core::synth::{self, ScenarioSpec, SuiteParams};
use tcsteer_core::targetgen::{self, TargetGenParams};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error: malformed flags or configuration
  3  I/O error or malformed input file
  4  numeric failure: invalid geometry, divergence, degenerate data

Configuration precedence: command-line flag, then --config file, then default.";

#[derive(Parser)]
#[command(
    name = "tcsteer",
    version,
    about = "Synthetic cyclone tracks, a rule-based detector and targeted attacks against it",
    after_help = EXIT_CODES
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a scenario from a spec, or a directory of suite scenarios.
    Synth(SynthArgs),
    /// Run the detector on a field file.
    Detect(DetectArgs),
    /// Dilate a binary mask into soft labels.
    Dilate(DilateArgs),
    /// Train the surrogate on detector masks of a directory of fields.
    TrainSurrogate(TrainArgs),
    /// Build an adversarial target track and its mask.
    GenTarget(GenTargetArgs),
    /// Perturb a forecast so the detector follows the target.
    Attack(AttackArgs),
    /// Score detected tracks against target tracks.
    Eval(EvalArgs),
    /// Fit anomaly detectors on clean forecasts and score adversarial ones.
    Stealth(StealthArgs),
    /// Draw tracks on an equirectangular map.
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario spec (JSON); omitted fields take their defaults.
    #[arg(long, conflicts_with = "suite")]
    spec: Option<PathBuf>,
    /// Write this many suite scenarios into the `--out` directory instead.
    #[arg(long)]
    suite: Option<usize>,
    /// Suite parameters (JSON).
    #[arg(long, requires = "suite")]
    suite_params: Option<PathBuf>,
    /// Suite seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth tracks (single scenario only).
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// Worker threads for suite generation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_mask: Option<PathBuf>,
    #[arg(long)]
    out_tracks: PathBuf,
    #[arg(long, default_value_t = STANDARD_GRAVITY)]
    gravity: f64,
}

#[derive(Args)]
struct DilateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Focal,
    Ce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    surrogate: SurrogateSetup,
    /// Dilate masks before training.
    dilate: bool,
    dilation: DilationParams,
    detector: DetectorConfig,
    gravity: f64,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            surrogate: SurrogateSetup::default(),
            dilate: true,
            dilation: DilationParams::training(),
            detector: DetectorConfig::default(),
            gravity: STANDARD_GRAVITY,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of field files; masks come from the detector.
    #[arg(long)]
    data: PathBuf,
    /// Validation directory; the best epoch on it is kept.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch losses (CSV).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Train on undilated masks.
    #[arg(long)]
    no_dilation: bool,
}

#[derive(Args)]
struct GenTargetArgs {
    #[arg(long)]
    tracks: PathBuf,
    /// Index of the track to retarget.
    #[arg(long, default_value_t = 0)]
    track: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw directions from the score distribution instead of taking the
    /// best one.
    #[arg(long)]
    sample: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_mask: Option<PathBuf>,
    /// Detector mask to edit; without it the target mask holds only the
    /// adversarial track and the grid comes from the track file.
    #[arg(long)]
    orig_mask: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    orig_mask: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long = "lambda")]
    lambda_reg: Option<f64>,
    #[arg(long)]
    sigma_grad: Option<f64>,
    #[arg(long)]
    sigma_reg: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Loss trace (CSV: iteration, loss, linf).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = STANDARD_GRAVITY)]
    gravity: f64,
    /// Accepted for symmetry with `synth`; one invocation attacks one
    /// scenario.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred_tracks: PathBuf,
    /// Target tracks; those marked adversarial are used when present.
    #[arg(long)]
    target_tracks: PathBuf,
    #[arg(long)]
    orig: Option<PathBuf>,
    #[arg(long)]
    adv: Option<PathBuf>,
    /// Checkpoint whose standardization is used for closeness; defaults to
    /// statistics of the original.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.5)]
    frac: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = STANDARD_GRAVITY)]
    gravity: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Pca,
    Iforest,
    Lof,
    All,
}

#[derive(Args)]
struct StealthArgs {
    /// Clean forecasts to evaluate (and fit on, unless `--fit` is given).
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    adv: PathBuf,
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    kind: KindArg,
    /// Attacker label written to the report; defaults to the `--adv`
    /// directory name.
    #[arg(long)]
    attacker: Option<String>,
    #[arg(long, default_value_t = 8)]
    block: usize,
    #[arg(long)]
    contamination: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, num_args = 1.., required = true)]
    tracks: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let res = match cli.cmd {
        Cmd::Synth(a) => synth_cmd(a, started),
        Cmd::Detect(a) => detect_cmd(a, started),
        Cmd::Dilate(a) => dilate_cmd(a, started),
        Cmd::TrainSurrogate(a) => train_cmd(a, started),
        Cmd::GenTarget(a) => gen_target_cmd(a, started),
        Cmd::Attack(a) => attack_cmd(a, started),
        Cmd::Eval(a) => eval_cmd(a, started),
        Cmd::Stealth(a) => stealth_cmd(a, started),
        Cmd::Render(a) => render_cmd(a, started),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&s).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn finish(mut m: RunManifest, primary: &Path, started: Instant) -> Result<()> {
    m.wall_time_s = started.elapsed().as_secs_f64();
    manifest::write_manifest(&m, primary)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn wfld_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "wfld") {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Usage(format!("{}: no .wfld files", dir.display())));
    }
    Ok(out)
}

fn synth_cmd(a: SynthArgs, started: Instant) -> Result<()> {
    match a.suite {
        None => {
            let spec: ScenarioSpec = load_json(a.spec.as_deref())?;
            let (f, truth) = synth::synth_scenario(&spec)?;
            wfld::write_field(&f, &a.out)?;
            let mut m = RunManifest::new("synth", to_value(&spec), Some(spec.seed)).output(&a.out);
            if let Some(t) = &a.tracks {
                geojson::write_tracks(
                    &TrackSet::new(*f.geometry(), f.times(), Role::Original, &truth),
                    t,
                )?;
                m = m.output(t);
            }
            if let Some(p) = &a.spec {
                m = m.input(p);
            }
            finish(m, &a.out, started)
        }
        Some(n) => {
            if a.tracks.is_some() {
                return Err(Error::Usage("--tracks applies to single scenarios".into()));
            }
            let params: SuiteParams = load_json(a.suite_params.as_deref())?;
            fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            let jobs = a.jobs.max(1);
            let work = |k: usize| -> Result<()> {
                for index in (k..n).step_by(jobs) {
                    let spec = synth::suite_scenario(&params, a.seed, index as u64);
                    let (f, truth) = synth::synth_scenario(&spec)?;
                    let stem = a.out.join(format!("scenario_{index:03}"));
                    wfld::write_field(&f, &stem.with_extension("wfld"))?;
                    geojson::write_tracks(
                        &TrackSet::new(*f.geometry(), f.times(), Role::Original, &truth),
                        &stem.with_extension("geojson"),
                    )?;
                }
                Ok(())
            };
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..jobs).map(|k| s.spawn(move || work(k))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect::<Result<Vec<()>>>()
            })?;
            let mut m = RunManifest::new("synth", to_value(&params), Some(a.seed)).output(&a.out);
            if let Some(p) = &a.suite_params {
                m = m.input(p);
            }
            finish(m, &a.out, started)
        }
    }
}

fn detect_cmd(a: DetectArgs, started: Instant) -> Result<()> {
    let cfg: DetectorConfig = load_json(a.config.as_deref())?;
    let f = wfld::read_field(&a.input)?;
    let inp = DetectorInputs::from_fields(&f, a.gravity)?;
    let d = detector::detect(&inp, &cfg);
    let g = *f.geometry();
    geojson::write_tracks(&TrackSet::new(g, f.times(), Role::Detected, &d.tracks), &a.out_tracks)?;
    let mut m = RunManifest::new("detect", to_value(&cfg), None)
        .input(&a.input)
        .output(&a.out_tracks);
    if let Some(p) = &a.out_mask {
        wfld::write_mask(&d.mask, &g, Variable::Mask, p)?;
        m = m.output(p);
    }
    if let Some(p) = &a.config {
        m = m.input(p);
    }
    println!("{} track(s)", d.tracks.len());
    finish(m, &a.out_tracks, started)
}

fn dilate_cmd(a: DilateArgs, started: Instant) -> Result<()> {
    let p = DilationParams::new(a.sigma, a.radius);
    let (mask, g) = wfld::read_mask(&a.input)?;
    let out = labels::dilate(&mask, &p, g.is_periodic())?;
    wfld::write_mask(&out, &g, Variable::Label, &a.out)?;
    let m = RunManifest::new("dilate", to_value(&p), None)
        .input(&a.input)
        .output(&a.out);
    finish(m, &a.out, started)
}

fn load_scenarios(
    dir: &Path,
    det: &DetectorConfig,
    gravity: f64,
) -> Result<Vec<experiment::Scenario>> {
    let mut out = Vec::new();
    for (k, p) in wfld_files(dir)?.iter().enumerate() {
        let f = wfld::read_field(p)?;
        if f.variables().len() < DetectorInputs::CHANNELS {
            continue;
        }
        let inputs = DetectorInputs::from_fields(&f, gravity)?;
        let detection = detector::detect(&inputs, det);
        out.push(experiment::Scenario {
            index: k as u64,
            fields: f,
            inputs,
            detection,
        });
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("{}: no forecast files", dir.display())));
    }
    Ok(out)
}

fn train_cmd(a: TrainArgs, started: Instant) -> Result<()> {
    let mut cfg: TrainFile = load_json(a.config.as_deref())?;
    if let Some(v) = a.epochs {
        cfg.surrogate.train.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.surrogate.train.learning_rate = v;
    }
    if let Some(v) = a.hidden {
        cfg.surrogate.hidden = v;
    }
    if let Some(v) = a.seed {
        cfg.surrogate.train.seed = v;
        cfg.surrogate.init_seed = v;
    }
    if let Some(l) = a.loss {
        cfg.surrogate.train.loss = match l {
            LossArg::Focal => LossKind::Focal,
            LossArg::Ce => LossKind::CrossEntropy,
        };
    }
    if a.no_dilation {
        cfg.dilate = false;
    }
    let dilation = cfg.dilate.then_some(cfg.dilation);
    let train = load_scenarios(&a.data, &cfg.detector, cfg.gravity)?;
    let stats = experiment::fit_stats(&train)?;
    let train_set = experiment::samples(&train, &stats, dilation)?;
    let val_set: Vec<Sample> = match &a.val {
        Some(d) => experiment::samples(&load_scenarios(d, &cfg.detector, cfg.gravity)?, &stats, dilation)?,
        None => Vec::new(),
    };
    let outcome = experiment::train_surrogate(&cfg.surrogate, &train_set, &val_set)?;
    checkpoint::write_checkpoint(
        &Checkpoint {
            model: outcome.model,
            stats,
        },
        &a.out,
    )?;
    let mut m = RunManifest::new("train-surrogate", to_value(&cfg), Some(cfg.surrogate.train.seed))
        .input(&a.data)
        .output(&a.out);
    if let Some(v) = &a.val {
        m = m.input(v);
    }
    if let Some(r) = &a.report {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &outcome.history {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        write_text(r, &s)?;
        m = m.output(r);
    }
    println!("best epoch {}", outcome.best_epoch);
    finish(m, &a.out, started)
}

fn gen_target_cmd(a: GenTargetArgs, started: Instant) -> Result<()> {
    let set = geojson::read_tracks(&a.tracks)?;
    let original = set
        .tracks
        .get(a.track)
        .ok_or_else(|| Error::Usage(format!("track {} not in {}", a.track, a.tracks.display())))?
        .track
        .clone();
    let params = TargetGenParams {
        gamma1: a.gamma1,
        gamma2: a.gamma2,
        seed: a.seed,
        sample: a.sample,
        ..TargetGenParams::default()
    };
    let adv = targetgen::synthesize_adversarial_track(&original, &params)?;
    let mut out = TrackSet {
        grid: set.grid,
        times: set.times,
        tracks: vec![
            RoleTrack {
                role: Role::Original,
                track: original.clone(),
            },
            RoleTrack {
                role: Role::Adversarial,
                track: adv.clone(),
            },
        ],
    };
    let mut m = RunManifest::new("gen-target", to_value(&params), Some(a.seed))
        .input(&a.tracks)
        .output(&a.out);
    if let Some(mask_path) = &a.out_mask {
        let (z_star, g) = match &a.orig_mask {
            Some(p) => {
                let (z, g) = wfld::read_mask(p)?;
                m = m.input(p);
                (targetgen::replace_track(&z, &original, &adv, &g)?, g)
            }
            None => {
                let (g, times) = match (set.grid, set.times) {
                    (Some(g), Some(t)) => (g, t),
                    _ => {
                        return Err(Error::Usage(
                            "track file carries no grid; pass --orig-mask".into(),
                        ))
                    }
                };
                (targetgen::rasterize(&adv, &g, times)?, g)
            }
        };
        out.grid = Some(g);
        out.times = Some(z_star.times);
        wfld::write_mask(&z_star, &g, Variable::Mask, mask_path)?;
        m = m.output(mask_path);
    }
    geojson::write_tracks(&out, &a.out)?;
    finish(m, &a.out, started)
}

fn attack_cmd(a: AttackArgs, started: Instant) -> Result<()> {
    let mut cfg: AttackConfig = load_json(a.config.as_deref())?;
    if let Some(m) = &a.method {
        cfg.method = Method::from_name(m).map_err(|_| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::Usage(format!("unknown method `{m}`; expected one of {}", names.join(", ")))
        })?;
    }
    let overrides = [
        (a.eta, &mut cfg.eta),
        (a.delta, &mut cfg.delta),
        (a.lambda_reg, &mut cfg.lambda_reg),
        (a.sigma_grad, &mut cfg.sigma_grad_deg),
        (a.sigma_reg, &mut cfg.sigma_reg_deg),
    ];
    for (flag, field) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(v) = a.iters {
        cfg.iters = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let _ = a.jobs;

    let ck = checkpoint::read_checkpoint(&a.model)?;
    let (f, in_stats) = wfld::read_field_with_stats(&a.input)?;
    let (z_star, gz) = wfld::read_mask(&a.target)?;
    let (z, go) = wfld::read_mask(&a.orig_mask)?;
    if gz != *f.geometry() || go != *f.geometry() {
        return Err(Error::Usage("masks and forecast lie on different grids".into()));
    }
    let inputs = DetectorInputs::from_fields(&f, a.gravity)?;
    let x0 = fields::standardize_inputs(&inputs, &ck.stats)?;
    let outcome = attack::run_attack(&x0, &z, &z_star, &ck.model, &cfg)?;
    let adv = attack::to_physical(&f, &x0, &outcome.adversarial, &ck.stats)?;
    wfld::write_field_with_stats(&adv, in_stats.as_ref(), &a.out)?;

    let mut m = RunManifest::new("attack", to_value(&cfg), Some(cfg.seed))
        .input(&a.input)
        .input(&a.model)
        .input(&a.target)
        .input(&a.orig_mask)
        .output(&a.out);
    if let Some(t) = &a.trace {
        let mut s = String::from("iteration,loss,linf\n");
        for r in &outcome.trace {
            s.push_str(&format!("{},{},{}\n", r.iteration, r.loss, r.linf));
        }
        write_text(t, &s)?;
        m = m.output(t);
    }
    finish(m, &a.out, started)
}

#[derive(Serialize)]
struct EvalReport {
    #[serde(flatten)]
    scores: TrajectoryScores,
    detected_targets: usize,
    false_alarm_predictions: usize,
    /// Mean absolute difference of standardized detector inputs; null
    /// without `--orig` and `--adv`.
    closeness: Option<f64>,
    radius_deg: f64,
    detect_frac: f64,
}

fn eval_cmd(a: EvalArgs, started: Instant) -> Result<()> {
    let pred = geojson::read_tracks(&a.pred_tracks)?.trajectories();
    let targets_set = geojson::read_tracks(&a.target_tracks)?;
    let adv: Vec<_> = targets_set
        .tracks
        .iter()
        .filter(|t| t.role == Role::Adversarial)
        .map(|t| t.track.clone())
        .collect();
    let targets = if adv.is_empty() {
        targets_set.trajectories()
    } else {
        adv
    };
    let scores = metrics::trajectory_scores(&pred, &targets, a.radius, a.frac);
    let mut m = RunManifest::new(
        "eval",
        serde_json::json!({"radius_deg": a.radius, "detect_frac": a.frac, "gravity": a.gravity}),
        None,
    )
    .input(&a.pred_tracks)
    .input(&a.target_tracks)
    .output(&a.out);
    let closeness = match (&a.orig, &a.adv) {
        (Some(o), Some(v)) => {
            let fo = wfld::read_field(o)?;
            let fa = wfld::read_field(v)?;
            let io = DetectorInputs::from_fields(&fo, a.gravity)?;
            let ia = DetectorInputs::from_fields(&fa, a.gravity)?;
            let stats = match &a.model {
                Some(p) => {
                    m = m.input(p);
                    checkpoint::read_checkpoint(p)?.stats
                }
                None => fields::StandardizationStats::compute(
                    &[io.fields()],
                    experiment::STD_FLOOR,
                )?,
            };
            m = m.input(o).input(v);
            let so = fields::standardize_inputs(&io, &stats)?;
            let sa = fields::standardize_inputs(&ia, &stats)?;
            Some(metrics::closeness(so.fields(), sa.fields())?)
        }
        (None, None) => None,
        _ => return Err(Error::Usage("--orig and --adv go together".into())),
    };
    let report = EvalReport {
        detected_targets: scores.detected.iter().filter(|d| **d).count(),
        false_alarm_predictions: scores.false_alarms.iter().filter(|f| **f).count(),
        scores,
        closeness,
        radius_deg: a.radius,
        detect_frac: a.frac,
    };
    write_text(&a.out, &serde_json::to_string_pretty(&report).expect("serializable"))?;
    finish(m, &a.out, started)
}

fn feature_set(dir: &Path, block: usize) -> Result<Vec<Vec<f64>>> {
    wfld_files(dir)?
        .iter()
        .map(|p| Ok(stealth::features(&wfld::read_field(p)?, block)))
        .collect()
}

fn stealth_cmd(a: StealthArgs, started: Instant) -> Result<()> {
    let mut params: StealthParams = load_json(a.config.as_deref())?;
    if let Some(c) = a.contamination {
        params.contamination = c;
    }
    if let Some(s) = a.seed {
        params.seed = s;
    }
    let kinds: Vec<DetectorKind> = match a.kind {
        KindArg::Pca => vec![DetectorKind::Pca],
        KindArg::Iforest => vec![DetectorKind::IForest],
        KindArg::Lof => vec![DetectorKind::Lof],
        KindArg::All => vec![DetectorKind::Pca, DetectorKind::IForest, DetectorKind::Lof],
    };
    let clean = feature_set(&a.clean, a.block)?;
    let adv = feature_set(&a.adv, a.block)?;
    let fit_on = match &a.fit {
        Some(d) => feature_set(d, a.block)?,
        None => clean.clone(),
    };
    let attacker = a.attacker.clone().unwrap_or_else(|| {
        a.adv
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "adversarial".into())
    });
    let mut csv = String::from("detector,attacker,precision,recall,f1,tp,fp,tn,fn,precision_defined\n");
    for kind in kinds {
        let det = stealth::fit(kind, &fit_on, &params)?;
        let r = stealth::evaluate(&det, &clean, &adv)?;
        csv.push_str(&format!(
            "{},{attacker},{},{},{},{},{},{},{},{}\n",
            kind.name(),
            r.precision,
            r.recall,
            r.f1,
            r.tp,
            r.fp,
            r.tn,
            r.r#fn,
            r.precision_defined
        ));
    }
    write_text(&a.out, &csv)?;
    let mut m = RunManifest::new(
        "stealth",
        serde_json::json!({"params": params, "block": a.block}),
        Some(params.seed),
    )
    .input(&a.clean)
    .input(&a.adv)
    .output(&a.out);
    if let Some(d) = &a.fit {
        m = m.input(d);
    }
    finish(m, &a.out, started)
}

fn render_cmd(a: RenderArgs, started: Instant) -> Result<()> {
    let sets = a
        .tracks
        .iter()
        .map(|p| geojson::read_tracks(p))
        .collect::<Result<Vec<TrackSet>>>()?;
    write_text(&a.out, &svg::render(&sets))?;
    let mut m = RunManifest::new("render", serde_json::json!({}), None).output(&a.out);
    for p in &a.tracks {
        m = m.input(p);
    }
    finish(m, &a.out, started)
}
