//! Rule-based cyclone detector: per-snapshot candidates from msl minima with
//! closed contours and a co-located warm core, then greedy stitching into
//! trajectories with lifetime and intensity filters.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;


#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::fields::DetectorInputs;
use crate::geo::{destination_point_deg, great_circle_deg, GridGeometry};
use crate::track::{TrackPoint, Trajectory};
use crate::volume::Volume;

/// Fill value used by upstream products for missing wind.
pub const MISSING_FILL: f64 = 1e20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub min_separation_deg: f64,
    /// Required msl rise around a candidate, Pa.
    pub msl_contour_delta: f64,
    pub msl_contour_radius_deg: f64,
    /// Required thickness drop around the warm core, m^2/s^2.
    pub thickness_contour_delta: f64,
    pub thickness_contour_radius_deg: f64,
    pub thickness_peak_tolerance_deg: f64,
    pub max_step_deg: f64,
    pub max_gap_hours: f64,
    pub min_lifetime_hours: f64,
    pub min_qualified_steps: usize,
    pub wind_threshold: f64,
    pub elevation_max: f64,
    pub lat_band: [f64; 2],
    pub step_hours: f64,
    pub regional_wind_radius_deg: f64,
    pub epsilon: f64,
    /// Number of rays in the closed-contour test.
    pub contour_rays: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_separation_deg: 6.0,
            msl_contour_delta: 200.0,
            msl_contour_radius_deg: 5.5,
            thickness_contour_delta: 58.8,
            thickness_contour_radius_deg: 6.5,
            thickness_peak_tolerance_deg: 1.0,
            max_step_deg: 8.0,
            max_gap_hours: 24.0,
            min_lifetime_hours: 54.0,
            min_qualified_steps: 10,
            wind_threshold: 10.0,
            elevation_max: 150.0,
            lat_band: [-50.0, 50.0],
            step_hours: 6.0,
            regional_wind_radius_deg: 2.0,
            epsilon: 1e-8,
            contour_rays: 16,
        }
    }
}

impl DetectorConfig {
    pub fn max_gap_steps(&self) -> usize {
        (self.max_gap_hours / self.step_hours + 1e-9) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub msl: f64,
    pub elevation: f64,
    pub regional_max_wind: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: Volume,
    pub tracks: Vec<Trajectory>,
}

pub fn is_missing(w: f64) -> bool {
    w.is_nan() || (w - MISSING_FILL).abs() < 1e-6
}

/// Strict minimum over the existing 8-neighbours (longitude wraps on
/// periodic grids, latitude is clamped).
fn is_strict_local_min(field: &[f64], g: &GridGeometry, i: usize, j: usize) -> bool {
    let v = field[i * g.cols + j];
    for di in -1isize..=1 {
        for dj in -1isize..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let (Some(ii), Some(jj)) = (g.shift_row(i, di), g.shift_col(j, dj)) else {
                continue;
            };
            if (ii, jj) != (i, j) && field[ii * g.cols + jj] <= v {
                return false;
            }
        }
    }
    true
}

/// Closed-contour test by radial sampling: along every ray the field must
/// change by at least `delta` (rise when `rise`, drop otherwise) within
/// `radius_deg`. Rays that leave the grid first fail.
pub fn closed_contour(
    field: &[f64],
    g: &GridGeometry,
    i: usize,
    j: usize,
    delta: f64,
    radius_deg: f64,
    rise: bool,
    rays: usize,
) -> bool {
    let centre = g.point(i, j);
    let v0 = field[i * g.cols + j];
    let steps = (radius_deg / g.spacing + 1e-9).floor() as usize;
    'ray: for r in 0..rays {
        let bearing = 360.0 * r as f64 / rays as f64;
        for s in 1..=steps {
            let p = destination_point_deg(centre, bearing, s as f64 * g.spacing);
            let Some((ii, jj)) = g.nearest_cell(p) else {
                return false;
            };
            let v = field[ii * g.cols + jj];
            let change = if rise { v - v0 } else { v0 - v };
            if change >= delta {
                continue 'ray;
            }
        }
        return false;
    }
    true
}

/// Maximum non-missing wind within `regional_wind_radius_deg + epsilon` of
/// a cell, or the cell's own wind when every neighbour is missing.
pub fn regional_max_wind(
    wind: &[f64],
    g: &GridGeometry,
    i: usize,
    j: usize,
    cfg: &DetectorConfig,
) -> f64 {
    let mut best: Option<f64> = None;
    g.for_each_within(
        i,
        j,
        cfg.regional_wind_radius_deg + cfg.epsilon,
        |ii, jj, _| {
            let w = wind[ii * g.cols + jj];
            if !is_missing(w) {
                best = Some(best.map_or(w, |b: f64| b.max(w)));
            }
        },
    );
    best.unwrap_or(wind[i * g.cols + j])
}

/// Candidate cyclone centres at time `t`.
pub fn detect_candidates(inp: &DetectorInputs, t: usize, cfg: &DetectorConfig) -> Vec<Candidate> {
    let g = inp.geometry();
    let msl = inp.msl(t);

    let mut minima = Vec::new();
    for i in 0..g.rows {
        for j in 0..g.cols {
            if is_strict_local_min(msl, g, i, j) {
                minima.push((i, j));
            }
        }
    }

    let deeper = |a: (usize, usize), b: (usize, usize)| -> bool {
        let (va, vb) = (msl[a.0 * g.cols + a.1], msl[b.0 * g.cols + b.1]);
        va < vb || (va == vb && a < b)
    };

    let thick = inp.thickness(t);
    let mut out = Vec::new();
    for &m in &minima {
        let pm = g.point(m.0, m.1);
        let shadowed = minima.iter().any(|&o| {
            o != m && deeper(o, m) && great_circle_deg(pm, g.point(o.0, o.1)) <= cfg.min_separation_deg
        });
        if shadowed {
            continue;
        }
        if !closed_contour(
            msl,
            g,
            m.0,
            m.1,
            cfg.msl_contour_delta,
            cfg.msl_contour_radius_deg,
            true,
            cfg.contour_rays,
        ) {
            continue;
        }
        let mut warm_core = false;
        g.for_each_within(m.0, m.1, cfg.thickness_peak_tolerance_deg + cfg.epsilon, |ii, jj, _| {
            if !warm_core
                && closed_contour(
                    thick,
                    g,
                    ii,
                    jj,
                    cfg.thickness_contour_delta,
                    cfg.thickness_contour_radius_deg,
                    false,
                    cfg.contour_rays,
                )
            {
                warm_core = true;
            }
        });
        if !warm_core {
            continue;
        }
        let k = m.0 * g.cols + m.1;
        out.push(Candidate {
            t,
            i: m.0,
            j: m.1,
            msl: msl[k],
            elevation: inp.elevation(t)[k],
            regional_max_wind: regional_max_wind(inp.wind(t), g, m.0, m.1, cfg),
        });
    }
    out
}

fn candidate_point(c: &Candidate, g: &GridGeometry) -> TrackPoint {
    TrackPoint {
        t: c.t,
        point: g.point(c.i, c.j),
        msl: c.msl,
        wind: c.regional_max_wind,
        elevation: c.elevation,
    }
}

fn qualifies(p: &TrackPoint, cfg: &DetectorConfig) -> bool {
    p.wind >= cfg.wind_threshold
        && p.elevation <= cfg.elevation_max
        && p.point.lat_deg >= cfg.lat_band[0]
        && p.point.lat_deg <= cfg.lat_band[1]
}

/// Lifetime and intensity filter applied to finished tracks.
pub fn accept_track(points: &[TrackPoint], cfg: &DetectorConfig) -> bool {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return false;
    };
    let lifetime = (last.t - first.t) as f64 * cfg.step_hours;
    let qualified = points.iter().filter(|p| qualifies(p, cfg)).count();
    lifetime >= cfg.min_lifetime_hours && qualified >= cfg.min_qualified_steps
}

/// Stitches raw candidate tracks without the acceptance filter; the result
/// holds candidate lists in creation order.
fn stitch_raw(by_time: &[Vec<Candidate>], g: &GridGeometry, cfg: &DetectorConfig) -> Vec<Vec<Candidate>> {
    let max_gap = cfg.max_gap_steps();
    let mut tracks: Vec<Vec<Candidate>> = Vec::new();
    for cands in by_time {
        let Some(t) = cands.first().map(|c| c.t) else {
            continue;
        };
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (a, tr) in tracks.iter().enumerate() {
            let last = tr.last().expect("tracks are never empty");
            if last.t >= t || t - last.t > max_gap {
                continue;
            }
            let pl = g.point(last.i, last.j);
            for (c, cand) in cands.iter().enumerate() {
                let d = great_circle_deg(pl, g.point(cand.i, cand.j));
                if d <= cfg.max_step_deg {
                    pairs.push((d, a, c));
                }
            }
        }
        pairs.sort_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        let mut track_used = vec![false; tracks.len()];
        let mut cand_used = vec![false; cands.len()];
        for (_, a, c) in pairs {
            if track_used[a] || cand_used[c] {
                continue;
            }
            track_used[a] = true;
            cand_used[c] = true;
            tracks[a].push(cands[c]);
        }
        for (c, cand) in cands.iter().enumerate() {
            if !cand_used[c] {
                tracks.push(vec![*cand]);
            }
        }
    }
    tracks
}

fn group_by_time(candidates: &[Candidate], times: usize) -> Vec<Vec<Candidate>> {
    let mut by_time = vec![Vec::new(); times];
    for c in candidates {
        if c.t < times {
            by_time[c.t].push(*c);
        }
    }
    by_time
}

/// Greedy nearest-neighbour stitching in time order followed by the
/// lifetime/intensity filter. `candidates` may come in any order.
pub fn stitch(candidates: &[Candidate], g: &GridGeometry, cfg: &DetectorConfig) -> Vec<Trajectory> {
    let times = candidates.iter().map(|c| c.t + 1).max().unwrap_or(0);
    stitch_raw(&group_by_time(candidates, times), g, cfg)
        .into_iter()
        .map(|tr| tr.iter().map(|c| candidate_point(c, g)).collect::<Vec<_>>())
        .filter(|pts| accept_track(pts, cfg))
        .map(Trajectory::new)
        .collect()
}

/// Runs the full detector: candidates at every step, stitching, filtering.
/// The mask is 1 exactly at the cells of surviving track points.
pub fn detect(inp: &DetectorInputs, cfg: &DetectorConfig) -> Detection {
    let g = *inp.geometry();
    let by_time: Vec<Vec<Candidate>> = (0..inp.times())
        .map(|t| detect_candidates(inp, t, cfg))
        .collect();
    let mut mask = Volume::zeros(inp.times(), g.rows, g.cols);
    let mut tracks = Vec::new();
    for raw in stitch_raw(&by_time, &g, cfg) {
        let pts: Vec<TrackPoint> = raw.iter().map(|c| candidate_point(c, &g)).collect();
        if accept_track(&pts, cfg) {
            for c in &raw {
                mask.set(c.t, c.i, c.j, 1.0);
            }
            tracks.push(Trajectory::new(pts));
        }
    }
    Detection { mask, tracks }
}

/// Orders candidates lexicographically by `(t, i, j)`.
pub fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| match a.t.cmp(&b.t) {
        Ordering::Equal => (a.i, a.j).cmp(&(b.i, b.j)),
        o => o,
    });
}
