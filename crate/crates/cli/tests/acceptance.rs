//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Fixture: suite scenarios on the default 32 x 64 lattice, 16 training
//! scenarios (seed 1), 20 evaluation scenarios (seed 2), 40 clean
//! scenarios for fitting the anomaly detectors (seed 3). The surrogate has
//! 8 hidden channels and is trained for 20 epochs at learning rate 3e-3;
//! attacks take 100 sign steps of 0.05.

use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcsteer::experiment::{
    attack_scenario, build_suite, cell_rates, fit_stats, samples, summarize, train_surrogate, AttackRun,
    Scenario, SuiteSummary, SurrogateSetup, Target,
};
use tcsteer_core::attack::{self, AttackConfig, Method, UpdateRule, Variant};
use tcsteer_core::detector::{self, Candidate, DetectorConfig, MISSING_FILL};
use tcsteer_core::fields::{self, DetectorInputs, FieldSequence, StandardizationStats, Variable};
use tcsteer_core::geo::{self, GeoPoint, GridGeometry};
use tcsteer_core::labels::{self, DilationParams};
use tcsteer_core::metrics;
use tcsteer_core::stealth::{self, AnomalyDetector, DetectorKind, StealthParams};
use tcsteer_core::surrogate::{self, Architecture, Gamma, LossKind, SurrogateModel};
use tcsteer_core::synth::{self, SuiteParams};
use tcsteer_core::targetgen::{self, TargetGenParams};
use tcsteer_core::track::{TrackPoint, Trajectory};
use tcsteer_core::volume::Volume;

type Check = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const R_KM: f64 = 6371.0;

/// Haversine central angle, radians.
fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon_deg - a.lon_deg).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

// 1 ---------------------------------------------------------------------

fn gradient_fidelity() -> Check {
    let g = GridGeometry::new(6, 7, 10.0, 130.0, 1.0).map_err(err)?;
    let times = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = (0..times * 4 * g.cells()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = DetectorInputs::new(
        FieldSequence::new(g, times, DetectorInputs::LAYOUT.to_vec(), data).map_err(err)?,
    )
    .map_err(err)?;
    let model = SurrogateModel::init(Architecture::three_layer(4, 4), 3, 0.0).map_err(err)?;
    let bin = |rng: &mut ChaCha8Rng, p: f64| if rng.random_bool(p) { 1.0 } else { 0.0 };
    let target = Volume::from_vec(times, g.rows, g.cols, (0..times * g.cells()).map(|_| bin(&mut rng, 0.3)).collect())
        .unwrap();
    let gm = Volume::from_vec(
        times,
        g.rows,
        g.cols,
        (0..times * g.cells()).map(|_| 2.0 * bin(&mut rng, 0.5)).collect(),
    )
    .unwrap();
    let loss = |x: &DetectorInputs| -> f64 {
        surrogate::focal_loss_with(&model.forward(x).unwrap(), &target, Gamma::PerCell(&gm)).unwrap()
    };
    let (l0, grad) = surrogate::grad_input(&model, &x, &target, Gamma::PerCell(&gm)).map_err(err)?;
    if (l0 - loss(&x)).abs() > 1e-12 * l0.abs().max(1.0) {
        return Ok((false, format!("loss mismatch {l0} vs {}", loss(&x))));
    }
    let h = 1e-4;
    let n = 240;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let k = rng.random_range(0..grad.len());
        let mut xp = x.clone();
        xp.data_mut()[k] += h;
        let mut xm = x.clone();
        xm.data_mut()[k] -= h;
        let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok((worst < 1e-4, format!("{n} coordinates, max relative error {worst:.2e}")))
}

// 2 ---------------------------------------------------------------------

fn geodesics() -> Check {
    let ex1 = geo::great_circle_deg(pt(0.0, 0.0), pt(0.0, 90.0));
    let d = std::f64::consts::PI / 180.0 * R_KM;
    let ex2 = geo::destination_point(pt(0.0, 0.0), 90.0, d, R_KM);
    let ex3 = geo::destination_point(pt(0.0, 0.0), 0.0, d, R_KM);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let examples = close(ex1, 90.0)
        && close(ex2.lat_deg, 0.0)
        && close(ex2.lon_deg, 1.0)
        && close(ex3.lat_deg, 1.0)
        && close(ex3.lon_deg, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut symmetric = true;
    let mut triangle = true;
    for _ in 0..10_000 {
        let start = pt(rng.random_range(-79.9..79.9), rng.random_range(0.0..360.0));
        let bearing = rng.random_range(0.0..360.0);
        let dist = rng.random_range(0.0..5000.0f64).max(1e-3);
        let end = geo::destination_point(start, bearing, dist, R_KM);
        let back = geo::great_circle_deg(start, end).to_radians() * R_KM;
        worst = worst.max((back - dist).abs() / dist);
        symmetric &= geo::great_circle_deg(start, end) == geo::great_circle_deg(end, start);
        let c = pt(rng.random_range(-90.0..=90.0), rng.random_range(0.0..360.0));
        let (ab, ac, cb) = (
            geo::great_circle_deg(start, end),
            geo::great_circle_deg(start, c),
            geo::great_circle_deg(c, end),
        );
        triangle &= ab <= ac + cb + 1e-9;
    }
    Ok((
        examples && symmetric && triangle && worst <= 1e-9,
        format!(
            "examples {ex1} ({}, {}) ({}, {}); 10000 roundtrips max relative error {worst:.2e}; symmetric {symmetric}; triangle {triangle}",
            ex2.lat_deg, ex2.lon_deg, ex3.lat_deg, ex3.lon_deg
        ),
    ))
}

// 3 ---------------------------------------------------------------------

fn oracle_missing(w: f64) -> bool {
    w.is_nan() || (w - 1e20).abs() < 1e-6
}

/// Exhaustive scan with an independent distance formula.
fn regional_oracle(wind: &[f64], g: &GridGeometry, i0: usize, j0: usize) -> f64 {
    let c = g.point(i0, j0);
    let mut best: Option<f64> = None;
    for i in 0..g.rows {
        for j in 0..g.cols {
            let w = wind[i * g.cols + j];
            if oracle_missing(w) {
                continue;
            }
            if haversine(c, g.point(i, j)).to_degrees() <= 2.0 + 1e-8 {
                best = Some(best.map_or(w, |b: f64| b.max(w)));
            }
        }
    }
    best.unwrap_or(wind[i0 * g.cols + j0])
}

fn line(n: usize, wind: f64) -> Vec<Candidate> {
    (0..n)
        .map(|t| Candidate {
            t,
            i: 20,
            j: 2 * t,
            msl: 99000.0,
            elevation: 0.0,
            regional_max_wind: wind,
        })
        .collect()
}

fn detector_oracle() -> Check {
    let cfg = DetectorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for case in 0..1000 {
        let g = match case % 4 {
            0 => GridGeometry::new(rng.random_range(8..20), 180, rng.random_range(-60.0..20.0), 0.0, 2.0),
            1 => GridGeometry::new(rng.random_range(10..24), rng.random_range(10..24), rng.random_range(-70.0..60.0), rng.random_range(0.0..360.0), 0.5),
            2 => GridGeometry::new(rng.random_range(8..16), rng.random_range(8..16), rng.random_range(-60.0..40.0), 350.0, 1.0),
            _ => GridGeometry::new(rng.random_range(12..30), rng.random_range(12..30), rng.random_range(-50.0..40.0), rng.random_range(0.0..360.0), 0.25),
        }
        .map_err(err)?;
        let wind: Vec<f64> = (0..g.cells())
            .map(|_| match rng.random_range(0..20) {
                0 => f64::NAN,
                1 => MISSING_FILL,
                _ => rng.random_range(0.0..40.0),
            })
            .collect();
        let (i, j) = (rng.random_range(0..g.rows), rng.random_range(0..g.cols));
        let got = detector::regional_max_wind(&wind, &g, i, j, &cfg);
        let want = regional_oracle(&wind, &g, i, j);
        if got.to_bits() != want.to_bits() && !(got.is_nan() && want.is_nan()) {
            mismatches += 1;
        }
    }

    let g = GridGeometry::new(41, 60, -10.0, 100.0, 0.1).map_err(err)?;
    let at = |i: usize, j: usize| i * g.cols + j;
    let mut w = vec![f64::NAN; g.cells()];
    w[at(20, 30)] = 12.0;
    let all_missing = detector::regional_max_wind(&w, &g, 20, 30, &cfg) == 12.0;
    let mut w = vec![0.0; g.cells()];
    w[at(20, 30)] = 20.0;
    w[at(39, 30)] = 30.0;
    let near = detector::regional_max_wind(&w, &g, 20, 30, &cfg) == 30.0;
    let g1 = GridGeometry::new(41, 60, -10.0, 100.0, 1.0).map_err(err)?;
    let mut w = vec![0.0; g1.cells()];
    w[20 * g1.cols + 30] = 20.0;
    w[22 * g1.cols + 30] = 40.0;
    let boundary = detector::regional_max_wind(&w, &g1, 20, 30, &cfg) == 40.0;

    let sg = GridGeometry::new(41, 60, -10.0, 100.0, 1.0).map_err(err)?;
    let steady = detector::stitch(&line(12, 15.0), &sg, &cfg);
    let accept = steady.len() == 1 && steady[0].len() == 12;
    let mut jump = line(12, 15.0);
    for c in jump.iter_mut().skip(6) {
        c.j += 7;
    }
    let gap_reject = detector::stitch(&jump, &sg, &cfg).is_empty();
    let mut weak = line(12, 15.0);
    for c in weak.iter_mut().take(3) {
        c.regional_max_wind = 9.0;
    }
    let weak_reject = detector::stitch(&weak, &sg, &cfg).is_empty();

    let pass = mismatches == 0 && all_missing && near && boundary && accept && gap_reject && weak_reject;
    Ok((
        pass,
        format!(
            "1000 fields, {mismatches} mismatches; cases all-missing {all_missing} 1.9deg {near} 2.0deg {boundary}; stitching accept {accept} 9deg-gap {gap_reject} 9-qualified {weak_reject}"
        ),
    ))
}

// 4 ---------------------------------------------------------------------

fn dilation() -> Check {
    let p = DilationParams::new(1.0, 2);
    let mut m = Volume::zeros(1, 9, 9);
    m.set(0, 4, 4, 1.0);
    let d = labels::dilate(&m, &p, false).map_err(err)?;
    let expect = [
        ((0, 0), 1.0),
        ((1, 0), (-0.5f64).exp()),
        ((1, 1), (-1.0f64).exp()),
        ((2, 0), (-2.0f64).exp()),
        ((2, 1), 0.0),
    ];
    let mut kernel_ok = true;
    for ((di, dj), v) in expect {
        kernel_ok &= (d.get(0, 4 + di, 4 + dj) - v).abs() <= 1e-12;
        kernel_ok &= (labels::kernel(di as isize, dj as isize, &p) - v).abs() <= 1e-12;
    }
    let mut two = Volume::zeros(1, 11, 11);
    two.set(0, 5, 4, 1.0);
    two.set(0, 5, 6, 1.0);
    let d2 = labels::dilate(&two, &p, false).map_err(err)?;
    let overlap_ok = (d2.get(0, 5, 5) - (-0.5f64).exp()).abs() <= 1e-12
        && (d2.get(0, 4, 5) - (-1.0f64).exp()).abs() <= 1e-12
        && d2.get(0, 5, 4) == 1.0
        && d2.get(0, 5, 6) == 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut identity = true;
    let mut support = true;
    for _ in 0..200 {
        let (t, r, c) = (rng.random_range(1..3), rng.random_range(4..16), rng.random_range(4..16));
        let mut m = Volume::zeros(t, r, c);
        for v in m.data.iter_mut() {
            if rng.random_bool(0.05) {
                *v = 1.0;
            }
        }
        let wrap = rng.random_bool(0.5);
        identity &= labels::dilate(&m, &DilationParams::new(rng.random_range(0.5..3.0), 0), wrap).map_err(err)? == m;
        let radius = rng.random_range(1..4usize);
        let out = labels::dilate(&m, &DilationParams::new(rng.random_range(0.5..3.0), radius), wrap).map_err(err)?;
        for tt in 0..t {
            for i in 0..r {
                for j in 0..c {
                    let v = out.get(tt, i, j);
                    if m.get(tt, i, j) == 1.0 {
                        support &= v == 1.0;
                        continue;
                    }
                    support &= v < 1.0;
                    if v > 0.0 {
                        let reached = m.positives().iter().any(|&(pt, pi, pj)| {
                            let di = pi as isize - i as isize;
                            let mut dj = (pj as isize - j as isize).abs();
                            if wrap {
                                dj = dj.min(c as isize - dj);
                            }
                            pt == tt && (di * di + dj * dj) as usize <= radius * radius
                        });
                        support &= reached;
                    }
                }
            }
        }
    }
    Ok((
        kernel_ok && overlap_ok && identity && support,
        format!("kernel values {kernel_ok}; overlap minimum {overlap_ok}; R = 0 identity {identity}; support bound on 200 masks {support}"),
    ))
}

// 5 ---------------------------------------------------------------------

fn random_track(rng: &mut ChaCha8Rng) -> Trajectory {
    let mut p = pt(rng.random_range(-40.0..40.0), rng.random_range(0.0..360.0));
    let mut heading: f64 = rng.random_range(0.0..360.0);
    let mut pts = Vec::new();
    for t in 0..12 {
        pts.push(TrackPoint {
            t,
            point: p,
            msl: 99000.0,
            wind: 20.0,
            elevation: 0.0,
        });
        heading += rng.random_range(-30.0..30.0);
        p = geo::destination_point(p, heading.rem_euclid(360.0), rng.random_range(50.0..400.0), R_KM);
    }
    Trajectory::new(pts)
}

fn target_synthesis() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut origin = true;
    let mut deterministic = true;
    let mut steps = 0;
    for _ in 0..100 {
        let tr = random_track(&mut rng);
        let params = TargetGenParams {
            gamma1: rng.random_range(0.0..3.0),
            gamma2: rng.random_range(0.05..3.0),
            seed: rng.random(),
            sample: rng.random_bool(0.5),
            ..Default::default()
        };
        let adv = targetgen::synthesize_adversarial_track(&tr, &params).map_err(err)?;
        let again = targetgen::synthesize_adversarial_track(&tr, &params).map_err(err)?;
        let bits = |t: &Trajectory| -> Vec<(usize, u64, u64)> {
            t.points
                .iter()
                .map(|p| (p.t, p.point.lat_deg.to_bits(), p.point.lon_deg.to_bits()))
                .collect()
        };
        deterministic &= bits(&adv) == bits(&again);
        origin &= adv.points[0] == tr.points[0];
        for (a, o) in adv.points.windows(2).zip(tr.points.windows(2)) {
            let da = haversine(a[0].point, a[1].point);
            let dorig = haversine(o[0].point, o[1].point);
            worst = worst.max((da - dorig).abs() / dorig);
            steps += 1;
        }
    }
    Ok((
        worst <= 1e-9 && origin && deterministic,
        format!("100 tracks, {steps} steps, max relative step error {worst:.2e}; origin fixed {origin}; deterministic {deterministic}"),
    ))
}

// shared fixture ----------------------------------------------------------

struct Fixture {
    eval: Vec<Scenario>,
    targets: Vec<Target>,
    stats: StandardizationStats,
    focal: SurrogateModel,
    ce: SurrogateModel,
    det: DetectorConfig,
}

fn fixture() -> Result<Fixture, String> {
    let det = DetectorConfig::default();
    let sp = SuiteParams::default();
    let tp = TargetGenParams::default();
    let train = build_suite(&sp, 1, 16, &det, &tp).map_err(err)?;
    let eval = build_suite(&sp, 2, 20, &det, &tp).map_err(err)?;
    let stats = fit_stats(&train).map_err(err)?;
    let mut setup = SurrogateSetup::default();
    setup.train.epochs = 20;
    setup.train.learning_rate = 3e-3;
    let dil = Some(DilationParams::training());
    let focal = train_surrogate(
        &setup,
        &samples(&train, &stats, dil).map_err(err)?,
        &samples(&eval, &stats, dil).map_err(err)?,
    )
    .map_err(err)?
    .model;
    setup.train.loss = LossKind::CrossEntropy;
    let ce = train_surrogate(
        &setup,
        &samples(&train, &stats, None).map_err(err)?,
        &samples(&eval, &stats, None).map_err(err)?,
    )
    .map_err(err)?
    .model;
    let targets = eval
        .iter()
        .map(|sc| Target::new(sc, &tp))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    Ok(Fixture {
        eval,
        targets,
        stats,
        focal,
        ce,
        det,
    })
}

fn attack_cfg(delta: f64) -> AttackConfig {
    AttackConfig {
        iters: 100,
        eta: 0.05,
        delta,
        ..Default::default()
    }
}

fn run_suite(fx: &Fixture, method: Method, delta: f64) -> Result<Vec<AttackRun>, String> {
    let cfg = AttackConfig {
        method,
        ..attack_cfg(delta)
    };
    fx.eval
        .iter()
        .zip(&fx.targets)
        .map(|(sc, tg)| attack_scenario(sc, tg, &fx.focal, &fx.stats, &cfg, method.variant(), &fx.det).map_err(err))
        .collect()
}

fn fmt_summary(s: &SuiteSummary) -> String {
    format!(
        "DR {:.3} ({}/{}) FAR {:.3} ({}/{}) closeness {:.4}",
        s.dr, s.detected, s.targets, s.far, s.false_alarms, s.predictions, s.closeness
    )
}

// 6 ---------------------------------------------------------------------

fn efficacy(runs: &[(Method, Vec<AttackRun>)]) -> Check {
    let s = |m: Method| summarize(&runs.iter().find(|(k, _)| *k == m).unwrap().1);
    let (cyc, taa, nod, now) = (
        s(Method::Cyc),
        s(Method::Taaowpf),
        s(Method::CycNoDilation),
        s(Method::CycNoWeighting),
    );
    let checks = [
        ("DR >= taaowpf", cyc.dr >= taa.dr),
        ("DR >= cyc-no-dilation", cyc.dr >= nod.dr),
        ("FAR <= cyc-no-weighting", cyc.far <= now.far),
        ("closeness <= taaowpf", cyc.closeness <= taa.closeness),
        ("DR >= 0.6", cyc.dr >= 0.6),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let mut detail = format!(
        "cyc {}; taaowpf {}; cyc-no-dilation {}; cyc-no-weighting {}",
        fmt_summary(&cyc),
        fmt_summary(&taa),
        fmt_summary(&nod),
        fmt_summary(&now)
    );
    if !failed.is_empty() {
        detail.push_str(&format!("; failed: {}", failed.join(", ")));
    }
    Ok((failed.is_empty(), detail))
}

// 7 and 8 ---------------------------------------------------------------

fn iterates(
    fx: &Fixture,
    cfg: &AttackConfig,
    variant: Variant,
) -> Result<(Vec<Vec<u64>>, DetectorInputs, DetectorInputs), String> {
    let sc = &fx.eval[0];
    let tg = &fx.targets[0];
    let x0 = fields::standardize_inputs(&sc.inputs, &fx.stats).map_err(err)?;
    let mut seen = Vec::new();
    let out = attack::run_attack_variant(&x0, &tg.z, &tg.z_star, &fx.focal, cfg, variant, |_, x| {
        seen.push(x.data().iter().map(|v| v.to_bits()).collect());
    })
    .map_err(err)?;
    Ok((seen, x0, out.adversarial))
}

fn ablation_identity(fx: &Fixture) -> Check {
    let cfg = AttackConfig {
        iters: 30,
        ..attack_cfg(10.0)
    };
    let a = Method::CycNoDilation.variant();
    let b = Method::CycNoWeighting.variant();
    let both = Variant {
        dilate: a.dilate && b.dilate,
        weight: a.weight && b.weight,
        rule: UpdateRule::Sign,
    };
    let (ours, _, _) = iterates(fx, &cfg, both)?;
    let (theirs, _, _) = iterates(fx, &cfg, Method::Taaowpf.variant())?;
    let moved = ours.first() != ours.last();
    Ok((
        ours == theirs && ours.len() == 30 && moved,
        format!("{} iterates compared bitwise, identical {}", ours.len(), ours == theirs),
    ))
}

fn clip_invariant(fx: &Fixture) -> Check {
    let delta = 0.2;
    let mut worst: f64 = 0.0;
    let mut bound = true;
    let mut unchanged = true;
    let sc = &fx.eval[0];
    for m in Method::ALL {
        let cfg = AttackConfig {
            iters: 25,
            method: m,
            ..attack_cfg(delta)
        };
        let (seen, x0, _) = iterates(fx, &cfg, m.variant())?;
        for it in &seen {
            for (b, x) in it.iter().zip(x0.data()) {
                let dev = (f64::from_bits(*b) - x).abs();
                worst = worst.max(dev);
                bound &= dev <= delta;
            }
        }
        for cfg in [
            AttackConfig { iters: 0, ..cfg.clone() },
            AttackConfig { delta: 0.0, iters: 10, ..cfg.clone() },
        ] {
            let (_, x0, adv) = iterates(fx, &cfg, m.variant())?;
            let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
            unchanged &= same(adv.data(), x0.data());
            let phys = attack::to_physical(&sc.fields, &x0, &adv, &fx.stats).map_err(err)?;
            unchanged &= same(phys.data(), sc.fields.data());
        }
    }
    Ok((
        bound && unchanged,
        format!("6 methods x 25 iterations at delta {delta}: max deviation {worst:.6}; iters 0 and delta 0 bit-identical {unchanged}"),
    ))
}

// 9 ---------------------------------------------------------------------

const SWEEP: [f64; 6] = [10.0, 5.0, 2.5, 1.0, 0.5, 0.3];

const CLEAN_POOL: u64 = 200;

fn clean_pool() -> Result<Vec<Vec<f64>>, String> {
    let sp = SuiteParams::default();
    (0..CLEAN_POOL)
        .map(|k| {
            let (f, _) = synth::synth_scenario(&synth::suite_scenario(&sp, 3, k)).map_err(err)?;
            Ok(stealth::features(&f, 8))
        })
        .collect()
}

fn recalls(dets: &[(DetectorKind, AnomalyDetector)], clean: &[Vec<f64>], runs: &[AttackRun]) -> Result<Vec<f64>, String> {
    let adv: Vec<Vec<f64>> = runs.iter().map(|r| stealth::features(&r.fields, 8)).collect();
    dets.iter()
        .map(|(_, d)| stealth::evaluate(d, clean, &adv).map(|r| r.recall).map_err(err))
        .collect()
}

/// Adjacent increases along a series ordered by decreasing delta.
fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] > w[0]).count()
}

fn stealth_direction(fx: &Fixture, runs: &[(Method, Vec<AttackRun>)]) -> Check {
    let pool = clean_pool()?;
    let params = StealthParams::default();
    let dets: Vec<(DetectorKind, AnomalyDetector)> = DetectorKind::ALL
        .into_iter()
        .map(|k| stealth::fit(k, &pool, &params).map(|d| (k, d)).map_err(err))
        .collect::<Result<_, _>>()?;
    let clean: Vec<Vec<f64>> = fx.eval.iter().map(|s| stealth::features(&s.fields, 8)).collect();
    let get = |m: Method| &runs.iter().find(|(k, _)| *k == m).unwrap().1;
    let cyc = recalls(&dets, &clean, get(Method::Cyc))?;
    let taa = recalls(&dets, &clean, get(Method::Taaowpf))?;
    let direction = cyc.iter().zip(&taa).all(|(c, t)| c <= t);
    let fpr: Vec<String> = dets
        .iter()
        .map(|(k, d)| {
            let n = clean.iter().filter(|x| d.score(x).map(|s| s.1).unwrap_or(true)).count();
            format!("{} {n}/{}", k.name(), clean.len())
        })
        .collect();

    let mut drs = Vec::new();
    let mut rec: Vec<Vec<f64>> = vec![Vec::new(); dets.len()];
    for &delta in &SWEEP {
        let owned;
        let rs = if delta == 10.0 {
            get(Method::Cyc)
        } else {
            owned = run_suite(fx, Method::Cyc, delta)?;
            &owned
        };
        drs.push(summarize(rs).dr);
        for (k, r) in recalls(&dets, &clean, rs)?.into_iter().enumerate() {
            rec[k].push(r);
        }
    }
    let sweep_ok = inversions(&drs) <= 1 && rec.iter().all(|r| inversions(r) <= 1);
    let names: Vec<String> = dets
        .iter()
        .zip(cyc.iter().zip(&taa))
        .map(|((k, _), (c, t))| format!("{} {c:.2}/{t:.2}", k.name()))
        .collect();
    let series: Vec<String> = dets
        .iter()
        .zip(&rec)
        .map(|((k, _), r)| format!("{} {:?}", k.name(), r))
        .collect();
    Ok((
        direction && sweep_ok,
        format!(
            "clean FP {}; recall cyc/taaowpf: {}; sweep delta {:?}: DR {:?}, recall {}",
            fpr.join(", "),
            names.join(", "),
            SWEEP,
            drs,
            series.join(", ")
        ),
    ))
}

// 10 --------------------------------------------------------------------

fn traj(t0: usize, lat: f64, lon: f64, n: usize, step: f64) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|k| TrackPoint {
                t: t0 + k,
                point: pt(lat, lon + step * k as f64),
                msl: 99000.0,
                wind: 20.0,
                elevation: 0.0,
            })
            .collect(),
    )
}

fn same_f(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn metrics_suite() -> Check {
    let mut ok = Vec::new();
    let vol = |bits: &[u8]| Volume::from_vec(1, 1, bits.len(), bits.iter().map(|&b| b as f64).collect()).unwrap();
    let target: Vec<u8> = (0..1000).map(|k| (k < 10) as u8).collect();
    let r = metrics::location_rates(&vol(&target), &vol(&target)).map_err(err)?;
    ok.push(("identical masks", r.tpr == 1.0 && r.fpr == 0.0));
    let inv: Vec<u8> = target.iter().map(|b| 1 - b).collect();
    let r = metrics::location_rates(&vol(&inv), &vol(&target)).map_err(err)?;
    ok.push(("complement", r.tpr == 0.0 && r.tnr == 0.0));
    let mut pred = vec![0u8; 1000];
    pred[..7].fill(1);
    pred[500] = 1;
    pred[600] = 1;
    let r = metrics::location_rates(&vol(&pred), &vol(&target)).map_err(err)?;
    ok.push(("7 of 10", r.tpr == 0.7 && r.fnr == 0.3 && r.fpr == 2.0 / 990.0));

    let t12 = traj(0, 15.0, 140.0, 12, 1.0);
    let s = metrics::trajectory_scores(std::slice::from_ref(&t12), std::slice::from_ref(&t12), 2.0, 0.5);
    ok.push(("identical tracks", s.dr == 1.0 && s.far == 0.0));
    let mut half = t12.clone();
    for p in half.points.iter_mut().skip(6) {
        p.point = pt(p.point.lat_deg + 5.0, p.point.lon_deg);
    }
    let s = metrics::trajectory_scores(&[half], std::slice::from_ref(&t12), 2.0, 0.5);
    ok.push(("half overlap detected", s.detected == [true] && s.overlap_fractions == [0.5]));
    let far_away = traj(0, 40.0, 200.0, 12, 1.0);
    let s = metrics::trajectory_scores(&[far_away], std::slice::from_ref(&t12), 2.0, 0.5);
    ok.push(("disjoint", s.dr == 0.0 && s.far == 1.0));

    let g = GridGeometry::new(2, 2, 0.0, 0.0, 1.0).map_err(err)?;
    let seq = |d: Vec<f64>| FieldSequence::new(g, 1, vec![Variable::Msl], d).unwrap();
    let a = seq(vec![0.0; 4]);
    ok.push(("closeness zero", metrics::closeness(&a, &a).map_err(err)? == 0.0));
    ok.push((
        "closeness 0.2",
        metrics::closeness(&a, &seq(vec![0.0, 0.0, 0.8, 0.0])).map_err(err)? == 0.2,
    ));
    let b = seq(vec![0.1, -0.3, 0.7, 0.25]);
    let b2 = seq(vec![0.2, -0.6, 1.4, 0.5]);
    ok.push((
        "closeness homogeneous",
        metrics::closeness(&a, &b2).map_err(err)? == 2.0 * metrics::closeness(&a, &b).map_err(err)?,
    ));
    let rep = stealth::report(8, 1, 2, 9);
    ok.push((
        "stealth arithmetic",
        rep.precision == 8.0 / 9.0 && rep.recall == 0.8 && rep.f1 == 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut invariant = true;
    let mut bounded = true;
    let mut monotone = true;
    for _ in 0..1000 {
        let random_tracks = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Trajectory> {
            (0..n)
                .map(|_| {
                    traj(
                        rng.random_range(0..4),
                        rng.random_range(10.0..16.0),
                        rng.random_range(130.0..136.0),
                        rng.random_range(1..10),
                        rng.random_range(-1.5..1.5),
                    )
                })
                .collect()
        };
        let n = rng.random_range(0..6);
        let preds = random_tracks(&mut rng, n);
        let n = rng.random_range(0..6);
        let targets = random_tracks(&mut rng, n);
        let s = metrics::trajectory_scores(&preds, &targets, 2.0, 0.5);
        let mut pi: Vec<usize> = (0..preds.len()).collect();
        let mut ti: Vec<usize> = (0..targets.len()).collect();
        pi.shuffle(&mut rng);
        ti.shuffle(&mut rng);
        let p2: Vec<Trajectory> = pi.iter().map(|&k| preds[k].clone()).collect();
        let t2: Vec<Trajectory> = ti.iter().map(|&k| targets[k].clone()).collect();
        let s2 = metrics::trajectory_scores(&p2, &t2, 2.0, 0.5);
        invariant &= same_f(s.dr, s2.dr) && same_f(s.far, s2.far);
        invariant &= ti.iter().enumerate().all(|(a, &b)| {
            s2.detected[a] == s.detected[b] && s2.overlap_fractions[a] == s.overlap_fractions[b]
        });
        invariant &= pi.iter().enumerate().all(|(a, &b)| s2.false_alarms[a] == s.false_alarms[b]);
        let unit = |x: f64| x.is_nan() || (0.0..=1.0).contains(&x);
        bounded &= unit(s.dr) && unit(s.far);
        bounded &= s.dr.is_nan() == targets.is_empty() && s.far.is_nan() == preds.is_empty();
        if let Some(t) = targets.first() {
            let mut more = preds.clone();
            more.push(t.clone());
            let s3 = metrics::trajectory_scores(&more, &targets, 2.0, 0.5);
            monotone &= s.far.is_nan() || s3.far <= s.far;
        }
    }
    ok.push(("order invariance", invariant));
    ok.push(("bounds", bounded));
    ok.push(("overlapping prediction never raises FAR", monotone));
    let failed: Vec<&str> = ok.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} examples and properties over 1000 permutations", ok.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    ))
}

// 11 --------------------------------------------------------------------

fn imbalance(fx: &Fixture) -> Check {
    let f = cell_rates(&fx.focal, &fx.eval, &fx.stats, 0.5).map_err(err)?;
    let c = cell_rates(&fx.ce, &fx.eval, &fx.stats, 0.5).map_err(err)?;
    Ok((
        f.fnr < c.fnr && f.fpr <= 0.01 && c.fpr <= 0.01,
        format!(
            "held-out cells at threshold 0.5: dilated focal FNR {:.4} FPR {:.5}; plain cross-entropy FNR {:.4} FPR {:.5}",
            f.fnr, f.fpr, c.fnr, c.fpr
        ),
    ))
}

// ----------------------------------------------------------------------

fn main() -> ExitCode {
    let mut failures = 0;
    let mut record = |n: usize, name: &str, start: Instant, res: Check| {
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match res {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {name}: {} [{secs:.1} s] {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    };

    let t = Instant::now();
    record(1, "gradient fidelity", t, gradient_fidelity());
    let t = Instant::now();
    record(2, "geodesics", t, geodesics());
    let t = Instant::now();
    record(3, "detector oracle", t, detector_oracle());
    let t = Instant::now();
    record(4, "dilation", t, dilation());
    let t = Instant::now();
    record(5, "target synthesis", t, target_synthesis());
    let t = Instant::now();
    record(10, "metrics", t, metrics_suite());

    let t = Instant::now();
    let fx = match fixture() {
        Ok(f) => f,
        Err(e) => {
            for (n, name) in [
                (6, "attack efficacy"),
                (7, "ablation identity"),
                (8, "clip invariant"),
                (9, "stealth directionality"),
                (11, "surrogate imbalance"),
            ] {
                record(n, name, t, Err(format!("fixture: {e}")));
            }
            return ExitCode::FAILURE;
        }
    };
    println!("fixture built in {:.1} s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    record(11, "surrogate imbalance", t, imbalance(&fx));
    let t = Instant::now();
    record(7, "ablation identity", t, ablation_identity(&fx));
    let t = Instant::now();
    record(8, "clip invariant", t, clip_invariant(&fx));

    let t = Instant::now();
    let runs: Result<Vec<(Method, Vec<AttackRun>)>, String> =
        [Method::Cyc, Method::Taaowpf, Method::CycNoDilation, Method::CycNoWeighting]
            .into_iter()
            .map(|m| run_suite(&fx, m, 10.0).map(|r| (m, r)))
            .collect();
    match runs {
        Ok(runs) => {
            record(6, "attack efficacy", t, efficacy(&runs));
            let t = Instant::now();
            record(9, "stealth directionality", t, stealth_direction(&fx, &runs));
        }
        Err(e) => {
            record(6, "attack efficacy", t, Err(e.clone()));
            record(9, "stealth directionality", t, Err(e));
        }
    }

    if failures == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
