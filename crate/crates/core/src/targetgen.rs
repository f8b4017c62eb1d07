//! Adversarial target trajectories: keep every geodesic step length of a
//! detected track but bend its headings away from the original, then
//! rasterize the result into a target mask.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    bearing_of_planar_vector, destination_point, lon_delta, GeoPoint, GridGeometry,
    EARTH_RADIUS_KM,
};
use crate::track::{TrackPoint, Trajectory};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("trajectory needs at least two points")]
    TooShort,
    #[error("direction weights must be non-negative with a positive sum")]
    Weights,
    #[error("zero original displacement")]
    DegenerateDirection,
    #[error("adversarial track reaches latitude {0}")]
    Latitude(f64),
    #[error("point at step {t} lies outside the grid")]
    OutsideGrid { t: usize },
    #[error("time step {t} exceeds the mask length {times}")]
    Time { t: usize, times: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetGenParams {
    /// Weight of the push away from the original heading.
    pub gamma1: f64,
    /// Weight of the pull towards the previous adversarial heading.
    pub gamma2: f64,
    pub seed: u64,
    pub earth_radius_km: f64,
    /// Draw the direction from the score distribution instead of taking
    /// the most probable one.
    pub sample: bool,
}

impl Default for TargetGenParams {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1.0,
            seed: 0,
            earth_radius_km: EARTH_RADIUS_KM,
            sample: false,
        }
    }
}

impl TargetGenParams {
    fn validate(&self) -> Result<(), TargetError> {
        let ok = |g: f64| g.is_finite() && g >= 0.0;
        if !ok(self.gamma1) || !ok(self.gamma2) || self.gamma1 + self.gamma2 <= 0.0 {
            return Err(TargetError::Weights);
        }
        Ok(())
    }
}

/// Bearings of the eight compass directions, degrees.
pub const COMPASS_BEARINGS: [f64; 8] = [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0];

/// Unit `(east, north)` vectors of the compass directions.
pub fn compass() -> [[f64; 2]; 8] {
    let mut out = [[0.0; 2]; 8];
    for (o, b) in out.iter_mut().zip(COMPASS_BEARINGS) {
        let r = b.to_radians();
        *o = [r.sin(), r.cos()];
    }
    // exact zeros on the axes
    for o in &mut out {
        for c in o.iter_mut() {
            if c.abs() < 1e-15 {
                *c = 0.0;
            }
        }
    }
    out
}

/// Great-circle length of every step, km, by the spherical law of cosines.
pub fn step_distances(traj: &Trajectory, earth_radius_km: f64) -> Result<Vec<f64>, TargetError> {
    if traj.len() < 2 {
        return Err(TargetError::TooShort);
    }
    Ok(traj
        .points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].point, w[1].point);
            if a == b {
                return 0.0;
            }
            let (pa, pb) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
            let dl = lon_delta(a.lon_deg, b.lon_deg).to_radians();
            let c = pa.sin() * pb.sin() + pa.cos() * pb.cos() * dl.cos();
            earth_radius_km * c.clamp(-1.0, 1.0).acos()
        })
        .collect())
}

/// Planar `(east, north)` displacement in degrees, longitude scaled by the
/// cosine of the mean latitude.
pub fn planar_step(a: GeoPoint, b: GeoPoint) -> [f64; 2] {
    let mean = 0.5 * (a.lat_deg + b.lat_deg);
    [
        lon_delta(a.lon_deg, b.lon_deg) * mean.to_radians().cos(),
        b.lat_deg - a.lat_deg,
    ]
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Probabilities of the eight compass directions for one step.
pub fn direction_scores(
    v_orig: [f64; 2],
    v_prev_adv: Option<[f64; 2]>,
    p: &TargetGenParams,
) -> Result<[f64; 8], TargetError> {
    p.validate()?;
    let no = norm(v_orig);
    if !(no > 0.0) {
        return Err(TargetError::DegenerateDirection);
    }
    let prev = v_prev_adv.filter(|v| norm(*v) > 0.0);
    let mut s = [0.0; 8];
    for (sj, d) in s.iter_mut().zip(compass()) {
        let cos_orig = (v_orig[0] * d[0] + v_orig[1] * d[1]) / no;
        *sj = p.gamma1 * (-cos_orig).exp();
        if let Some(v) = prev {
            let cos_adv = (v[0] * d[0] + v[1] * d[1]) / norm(v);
            *sj += p.gamma2 * cos_adv.exp();
        }
    }
    let total: f64 = s.iter().sum();
    for x in &mut s {
        *x /= total;
    }
    Ok(s)
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax(p: &[f64; 8]) -> usize {
    let mut best = 0;
    for j in 1..8 {
        if p[j] > p[best] {
            best = j;
        }
    }
    best
}

fn sample(p: &[f64; 8], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return j;
        }
    }
    7
}

/// Builds the adversarial counterpart of `traj`: same start, same times,
/// same geodesic step lengths, headings blended towards the selected
/// compass direction. Intensity fields are copied from the original.
pub fn synthesize_adversarial_track(
    traj: &Trajectory,
    p: &TargetGenParams,
) -> Result<Trajectory, TargetError> {
    p.validate()?;
    let dists = step_distances(traj, p.earth_radius_km)?;
    let compass = compass();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out: Vec<TrackPoint> = Vec::with_capacity(traj.len());
    out.push(traj.points[0]);
    let mut prev_adv: Option<[f64; 2]> = None;
    for (k, w) in traj.points.windows(2).enumerate() {
        let here = out[k].point;
        let v = planar_step(w[0].point, w[1].point);
        let next = if dists[k] == 0.0 || norm(v) == 0.0 {
            here
        } else {
            let probs = direction_scores(v, prev_adv, p)?;
            let j = if p.sample {
                sample(&probs, &mut rng)
            } else {
                argmax(&probs)
            };
            let d = compass[j];
            let mut u = [v[0] + d[0], v[1] + d[1]];
            if norm(u) < 1e-12 {
                u = d;
            }
            let bearing =
                bearing_of_planar_vector(u[0], u[1]).map_err(|_| TargetError::DegenerateDirection)?;
            destination_point(here, bearing, dists[k], p.earth_radius_km)
        };
        if next.lat_deg.abs() > 85.0 {
            return Err(TargetError::Latitude(next.lat_deg));
        }
        let step = planar_step(here, next);
        if norm(step) > 0.0 {
            prev_adv = Some(step);
        }
        out.push(TrackPoint { point: next, ..w[1] });
    }
    Ok(Trajectory::new(out))
}

fn cell_of(g: &GridGeometry, tp: &TrackPoint, times: usize) -> Result<(usize, usize), TargetError> {
    if tp.t >= times {
        return Err(TargetError::Time { t: tp.t, times });
    }
    g.nearest_cell(tp.point)
        .ok_or(TargetError::OutsideGrid { t: tp.t })
}

/// Binary mask with the nearest cell of every point set at its time step.
pub fn rasterize(traj: &Trajectory, g: &GridGeometry, times: usize) -> Result<Volume, TargetError> {
    let mut m = Volume::zeros(times, g.rows, g.cols);
    for tp in &traj.points {
        let (i, j) = cell_of(g, tp, times)?;
        m.set(tp.t, i, j, 1.0);
    }
    Ok(m)
}

/// Replaces `original`'s cells in `mask` by the cells of `adversarial`,
/// leaving everything else untouched.
pub fn replace_track(
    mask: &Volume,
    original: &Trajectory,
    adversarial: &Trajectory,
    g: &GridGeometry,
) -> Result<Volume, TargetError> {
    let mut out = mask.clone();
    for tp in &original.points {
        let (i, j) = cell_of(g, tp, mask.times)?;
        out.set(tp.t, i, j, 0.0);
    }
    for tp in &adversarial.points {
        let (i, j) = cell_of(g, tp, mask.times)?;
        out.set(tp.t, i, j, 1.0);
    }
    Ok(out)
}
