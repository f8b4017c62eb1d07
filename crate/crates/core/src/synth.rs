//! Synthetic scenarios: parametric vortices moving over smooth noisy
//! background fields, with their ground-truth tracks.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{FieldSequence, Variable, STANDARD_GRAVITY};
use crate::geo::{
    destination_point, great_circle_deg, lon_delta, GeoPoint, GridGeometry, EARTH_RADIUS_KM,
};
use crate::track::{TrackPoint, Trajectory};

/// Variable order of generated sequences.
pub const LAYOUT: [Variable; 6] = [
    Variable::Msl,
    Variable::U10,
    Variable::V10,
    Variable::Z300,
    Variable::Z500,
    Variable::SurfaceGeopotential,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("vortex {vortex} leaves |lat| <= 89 at step {step}")]
    LeavesDomain { vortex: usize, step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexSpec {
    pub start: GeoPoint,
    /// Heading per step, degrees clockwise from north. The last entry is
    /// reused once the schedule runs out.
    pub bearings_deg: Vec<f64>,
    /// Distance travelled per step, km; reused like `bearings_deg`.
    pub speeds_km: Vec<f64>,
    /// Central msl depression, Pa.
    pub depth: f64,
    /// e-folding scale of the depression and warm core, degrees.
    pub core_radius: f64,
    pub peak_wind: f64,
    /// Radius of maximum wind, degrees.
    pub wind_radius: f64,
    /// Peak geopotential anomaly added at 300 hPa, m^2/s^2.
    pub warm_core_amp: f64,
    pub lifetime_steps: usize,
    #[serde(default)]
    pub start_step: usize,
}

impl VortexSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(self.depth.is_finite() && self.depth >= 0.0) {
            return Err(SynthError::Invalid("depth must be non-negative"));
        }
        if !pos(self.core_radius) || !pos(self.wind_radius) {
            return Err(SynthError::Invalid("radii must be positive"));
        }
        if !(self.peak_wind >= 0.0 && self.warm_core_amp.is_finite()) {
            return Err(SynthError::Invalid("peak wind must be non-negative"));
        }
        if self.lifetime_steps == 0 {
            return Err(SynthError::Invalid("lifetime must be at least one step"));
        }
        if self.bearings_deg.is_empty() || self.speeds_km.is_empty() {
            return Err(SynthError::Invalid("bearing and speed schedules must be nonempty"));
        }
        if self.speeds_km.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || self.bearings_deg.iter().any(|b| !b.is_finite())
        {
            return Err(SynthError::Invalid("schedules must be finite, speeds non-negative"));
        }
        Ok(())
    }

    fn schedule(v: &[f64], k: usize) -> f64 {
        v[k.min(v.len() - 1)]
    }

    /// Centre positions for each active step, in order.
    pub fn centres(&self) -> Vec<GeoPoint> {
        let mut out = Vec::with_capacity(self.lifetime_steps);
        let mut p = self.start;
        out.push(p);
        for k in 0..self.lifetime_steps.saturating_sub(1) {
            p = destination_point(
                p,
                Self::schedule(&self.bearings_deg, k),
                Self::schedule(&self.speeds_km, k),
                EARTH_RADIUS_KM,
            );
            out.push(p);
        }
        out
    }
}

/// Modified Rankine profile, tapered to zero between 3 and 4 wind radii.
pub fn wind_profile(r_deg: f64, peak: f64, rmw: f64) -> f64 {
    if r_deg <= rmw {
        return peak * r_deg / rmw;
    }
    let v = peak * (rmw / r_deg).powf(0.6);
    if r_deg <= 3.0 * rmw {
        v
    } else if r_deg < 4.0 * rmw {
        let s = (r_deg - 3.0 * rmw) / rmw;
        v * 0.5 * (1.0 + (core::f64::consts::PI * s).cos())
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub msl_amp: f64,
    pub wind_amp: f64,
    pub geopotential_amp: f64,
    /// Gaussian smoothing length, grid cells.
    pub correlation_cells: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            msl_amp: 30.0,
            wind_amp: 0.8,
            geopotential_amp: 6.0,
            correlation_cells: 2.0,
        }
    }
}

impl NoiseSpec {
    pub fn calm() -> Self {
        Self {
            msl_amp: 0.0,
            wind_amp: 0.0,
            geopotential_amp: 0.0,
            correlation_cells: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandPatch {
    pub center: GeoPoint,
    pub radius_deg: f64,
    pub elevation_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub geometry: GridGeometry,
    pub times: usize,
    pub background_msl: f64,
    pub background_z500: f64,
    pub background_z300: f64,
    pub noise: NoiseSpec,
    pub vortices: Vec<VortexSpec>,
    pub land: Vec<LandPatch>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            geometry: GridGeometry {
                rows: 60,
                cols: 120,
                lat0: 0.0,
                lon0: 100.0,
                spacing: 1.0,
            },
            times: 12,
            background_msl: 101_000.0,
            background_z500: 55_000.0,
            background_z300: 90_000.0,
            noise: NoiseSpec::default(),
            vortices: Vec::new(),
            land: Vec::new(),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let g = &self.geometry;
        GridGeometry::new(g.rows, g.cols, g.lat0, g.lon0, g.spacing)
            .map_err(|_| SynthError::Invalid("bad geometry"))?;
        if self.times == 0 {
            return Err(SynthError::Invalid("at least one time step"));
        }
        let n = &self.noise;
        if [n.msl_amp, n.wind_amp, n.geopotential_amp]
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return Err(SynthError::Invalid("noise amplitudes must be non-negative"));
        }
        if !(n.correlation_cells.is_finite() && n.correlation_cells >= 0.0) {
            return Err(SynthError::Invalid("correlation length must be non-negative"));
        }
        for v in &self.vortices {
            v.validate()?;
        }
        Ok(())
    }
}

/// Gaussian random field with unit variance away from the edges: white
/// noise smoothed separably with a Gaussian of `sigma` cells.
fn smooth_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64, wrap: bool) -> Vec<f64> {
    let mut f: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    if sigma <= 0.0 {
        return f;
    }
    let half = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / sum).collect();
    let gain = w.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut tmp = vec![0.0; rows * cols];
    // along longitude
    for i in 0..rows {
        for j in 0..cols {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let jj = j as isize + k as isize - half;
                let jj = if wrap {
                    jj.rem_euclid(cols as isize)
                } else if (0..cols as isize).contains(&jj) {
                    jj
                } else {
                    continue;
                };
                acc += wk * f[i * cols + jj as usize];
                norm += wk;
            }
            tmp[i * cols + j] = acc / norm / gain;
        }
    }
    // along latitude
    for i in 0..rows {
        for j in 0..cols {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let ii = i as isize + k as isize - half;
                if !(0..rows as isize).contains(&ii) {
                    continue;
                }
                acc += wk * tmp[ii as usize * cols + j];
                norm += wk;
            }
            f[i * cols + j] = acc / norm / gain;
        }
    }
    f
}

/// Builds the fields and ground-truth tracks of a scenario.
pub fn synth_scenario(spec: &ScenarioSpec) -> Result<(FieldSequence, Vec<Trajectory>), SynthError> {
    spec.validate()?;
    let g = spec.geometry;
    let (rows, cols, times) = (g.rows, g.cols, spec.times);

    let mut paths = Vec::with_capacity(spec.vortices.len());
    for (vi, v) in spec.vortices.iter().enumerate() {
        let c = v.centres();
        for (k, p) in c.iter().enumerate() {
            if v.start_step + k >= times {
                break;
            }
            if p.lat_deg.abs() > 89.0 {
                return Err(SynthError::LeavesDomain {
                    vortex: vi,
                    step: v.start_step + k,
                });
            }
        }
        paths.push(c);
    }

    let mut f = FieldSequence::zeros(g, times, LAYOUT.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let wrap = g.is_periodic();
    let n = &spec.noise;

    let mut surface = vec![0.0; rows * cols];
    for patch in &spec.land {
        for i in 0..rows {
            for j in 0..cols {
                if great_circle_deg(g.point(i, j), patch.center) <= patch.radius_deg {
                    surface[i * cols + j] = patch.elevation_m * STANDARD_GRAVITY;
                }
            }
        }
    }

    for t in 0..times {
        let bases = [
            (0usize, spec.background_msl, n.msl_amp),
            (1, 0.0, n.wind_amp),
            (2, 0.0, n.wind_amp),
            (3, spec.background_z300, n.geopotential_amp),
            (4, spec.background_z500, n.geopotential_amp),
        ];
        for (k, base, amp) in bases {
            let noise = smooth_noise(&mut rng, rows, cols, n.correlation_cells, wrap);
            for (o, e) in f.plane_mut(t, k).iter_mut().zip(noise) {
                *o = base + amp * e;
            }
        }
        f.plane_mut(t, 5).copy_from_slice(&surface);

        for (v, path) in spec.vortices.iter().zip(&paths) {
            if t < v.start_step || t - v.start_step >= path.len() {
                continue;
            }
            let c = path[t - v.start_step];
            let sense = if c.lat_deg >= 0.0 { 1.0 } else { -1.0 };
            let coslat = c.lat_deg.to_radians().cos();
            let reach = (4.0 * v.wind_radius).max(6.0 * v.core_radius);
            for i in 0..rows {
                for j in 0..cols {
                    let p = g.point(i, j);
                    let r = great_circle_deg(c, p);
                    if r > reach {
                        continue;
                    }
                    let k = i * cols + j;
                    let gauss = (-(r * r) / (2.0 * v.core_radius * v.core_radius)).exp();
                    f.plane_mut(t, 0)[k] -= v.depth * gauss;
                    f.plane_mut(t, 3)[k] += v.warm_core_amp * gauss;
                    let speed = wind_profile(r, v.peak_wind, v.wind_radius);
                    let east = lon_delta(c.lon_deg, p.lon_deg) * coslat;
                    let north = p.lat_deg - c.lat_deg;
                    let norm = (east * east + north * north).sqrt();
                    if speed > 0.0 && norm > 0.0 {
                        // counter-clockwise in the north, clockwise in the south
                        f.plane_mut(t, 1)[k] += -sense * speed * north / norm;
                        f.plane_mut(t, 2)[k] += sense * speed * east / norm;
                    }
                }
            }
        }
    }

    let tracks = spec
        .vortices
        .iter()
        .zip(&paths)
        .map(|(v, path)| {
            Trajectory::new(
                path.iter()
                    .enumerate()
                    .filter(|(k, _)| v.start_step + k < times)
                    .map(|(k, p)| TrackPoint {
                        t: v.start_step + k,
                        point: *p,
                        msl: spec.background_msl - v.depth,
                        wind: v.peak_wind,
                        elevation: 0.0,
                    })
                    .collect(),
            )
        })
        .collect();
    Ok((f, tracks))
}

/// Ranges for randomly drawn single-vortex scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteParams {
    pub geometry: GridGeometry,
    pub times: usize,
    pub depth: [f64; 2],
    pub peak_wind: [f64; 2],
    pub speed_km: [f64; 2],
    /// Initial heading range, degrees.
    pub bearing_deg: [f64; 2],
    /// Per-step heading drift range, degrees.
    pub turn_deg: [f64; 2],
    pub core_radius: f64,
    pub wind_radius: f64,
    pub warm_core_amp: f64,
    /// Minimum distance of the start from the lattice edge, degrees.
    pub margin_deg: f64,
    pub noise: NoiseSpec,
    /// Extra depressions per scenario that the detector must reject: each
    /// is either weak-winded or lacks a warm core.
    pub decoys: usize,
    /// Peak wind range of weak-winded decoys, m/s.
    pub decoy_wind: [f64; 2],
    /// Minimum distance of a decoy from the main vortex at every step,
    /// degrees.
    pub decoy_separation_deg: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            geometry: GridGeometry {
                rows: 32,
                cols: 64,
                lat0: 5.0,
                lon0: 120.0,
                spacing: 1.0,
            },
            times: 12,
            depth: [1800.0, 2600.0],
            peak_wind: [22.0, 35.0],
            speed_km: [55.0, 95.0],
            bearing_deg: [250.0, 340.0],
            turn_deg: [-4.0, 4.0],
            core_radius: 3.0,
            wind_radius: 1.5,
            warm_core_amp: 400.0,
            margin_deg: 11.0,
            noise: NoiseSpec::default(),
            decoys: 0,
            decoy_wind: [2.0, 6.0],
            decoy_separation_deg: 10.0,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Scenario `index` of the suite drawn from `seed`. The vortex starts in
/// the eastern half and travels roughly westward, so its whole track stays
/// at least `margin_deg` inside the lattice for typical parameters.
///
/// Decoys are placed by rejection sampling (a bounded number of tries
/// each); one that cannot be placed is dropped.
pub fn suite_scenario(p: &SuiteParams, seed: u64, index: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let g = p.geometry;
    let lat_span = (g.rows - 1) as f64 * g.spacing;
    let lon_span = (g.cols - 1) as f64 * g.spacing;
    let lat = g.lat0 + draw(&mut rng, [p.margin_deg, (lat_span - p.margin_deg).max(p.margin_deg)]);
    let lon_off = draw(
        &mut rng,
        [0.6 * lon_span, (lon_span - p.margin_deg).max(0.6 * lon_span)],
    );
    let b0 = draw(&mut rng, p.bearing_deg);
    let mut bearings = Vec::with_capacity(p.times);
    let mut b = b0;
    for _ in 0..p.times {
        bearings.push(b);
        b += draw(&mut rng, p.turn_deg);
    }
    let speed = draw(&mut rng, p.speed_km);
    let vortex = VortexSpec {
        start: GeoPoint {
            lat_deg: lat,
            lon_deg: crate::geo::normalize_lon(g.lon0 + lon_off),
        },
        bearings_deg: bearings,
        speeds_km: vec![speed],
        depth: draw(&mut rng, p.depth),
        core_radius: p.core_radius,
        peak_wind: draw(&mut rng, p.peak_wind),
        wind_radius: p.wind_radius,
        warm_core_amp: p.warm_core_amp,
        lifetime_steps: p.times,
        start_step: 0,
    };
    let seed = rng.random();
    let main = vortex.centres();
    let mut vortices = vec![vortex];
    for _ in 0..p.decoys {
        if let Some(d) = place_decoy(p, &mut rng, &main) {
            vortices.push(d);
        }
    }
    ScenarioSpec {
        geometry: g,
        times: p.times,
        noise: p.noise.clone(),
        vortices,
        seed,
        ..ScenarioSpec::default()
    }
}

fn place_decoy(p: &SuiteParams, rng: &mut ChaCha8Rng, main: &[GeoPoint]) -> Option<VortexSpec> {
    let g = p.geometry;
    let inset = 2.0 * p.core_radius;
    let lat_span = (g.rows - 1) as f64 * g.spacing;
    let lon_span = (g.cols - 1) as f64 * g.spacing;
    let weak = rng.random_bool(0.5);
    let depth = draw(rng, p.depth);
    let (peak_wind, warm_core_amp) = if weak {
        (draw(rng, p.decoy_wind), p.warm_core_amp)
    } else {
        (draw(rng, p.peak_wind), 0.0)
    };
    for _ in 0..32 {
        let lat = g.lat0 + draw(rng, [inset, (lat_span - inset).max(inset)]);
        let lon = g.lon0 + draw(rng, [inset, (lon_span - inset).max(inset)]);
        let v = VortexSpec {
            start: GeoPoint {
                lat_deg: lat,
                lon_deg: crate::geo::normalize_lon(lon),
            },
            bearings_deg: vec![draw(rng, [0.0, 360.0])],
            speeds_km: vec![0.5 * draw(rng, p.speed_km)],
            depth,
            core_radius: p.core_radius,
            peak_wind,
            wind_radius: p.wind_radius,
            warm_core_amp,
            lifetime_steps: p.times,
            start_step: 0,
        };
        let ok = v.centres().iter().zip(main).all(|(c, m)| {
            let (i, j) = (c.lat_deg - g.lat0, crate::geo::normalize_lon(c.lon_deg - g.lon0));
            i >= inset
                && i <= lat_span - inset
                && j >= inset
                && j <= lon_span - inset
                && great_circle_deg(*c, *m) >= p.decoy_separation_deg
        });
        if ok {
            return Some(v);
        }
    }
    None
}
