//! Cellwise rates, trajectory-level detection and false-alarm rates, and
//! closeness between forecasts.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::FieldSequence;
use crate::geo::great_circle_deg;
use crate::track::Trajectory;
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("shape mismatch")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationRates {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub r#fn: u64,
    pub tpr: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Cellwise confusion counts; a cell is positive when its value is at
/// least 0.5.
pub fn location_rates(pred: &Volume, target: &Volume) -> Result<LocationRates, MetricsError> {
    if !pred.same_shape(target) {
        return Err(MetricsError::Shape);
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (p, t) in pred.data.iter().zip(&target.data) {
        match (*p >= 0.5, *t >= 0.5) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(LocationRates {
        tp,
        tn,
        fp,
        r#fn: fn_,
        tpr: ratio(tp, tp + fn_),
        tnr: ratio(tn, tn + fp),
        fpr: ratio(fp, tn + fp),
        fnr: ratio(fn_, tp + fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScores {
    /// Detected targets over targets; NaN without targets.
    pub dr: f64,
    /// False-alarm predictions over predictions; NaN without predictions.
    pub far: f64,
    pub n_targets: usize,
    pub n_predictions: usize,
    /// Best overlap count of each target over its length.
    pub overlap_fractions: Vec<f64>,
    pub detected: Vec<bool>,
    pub false_alarms: Vec<bool>,
}

/// Number of time steps at which both tracks have a point and the two
/// points lie strictly closer than `radius_deg`.
pub fn overlap_count(a: &Trajectory, b: &Trajectory, radius_deg: f64) -> usize {
    a.points
        .iter()
        .filter(|p| {
            b.at_time(p.t)
                .is_some_and(|q| great_circle_deg(p.point, q.point) < radius_deg)
        })
        .count()
}

pub fn trajectory_scores(
    pred: &[Trajectory],
    targets: &[Trajectory],
    radius_deg: f64,
    detect_frac: f64,
) -> TrajectoryScores {
    let counts: Vec<Vec<usize>> = targets
        .iter()
        .map(|t| pred.iter().map(|p| overlap_count(t, p, radius_deg)).collect())
        .collect();
    let mut detected = Vec::with_capacity(targets.len());
    let mut overlap_fractions = Vec::with_capacity(targets.len());
    for (t, row) in targets.iter().zip(&counts) {
        let best = row.iter().copied().max().unwrap_or(0);
        let len = t.len();
        overlap_fractions.push(if len == 0 { 0.0 } else { best as f64 / len as f64 });
        detected.push(len > 0 && best as f64 >= detect_frac * len as f64);
    }
    let false_alarms: Vec<bool> = (0..pred.len())
        .map(|k| counts.iter().all(|row| row[k] == 0))
        .collect();
    let n_det = detected.iter().filter(|d| **d).count();
    let n_fa = false_alarms.iter().filter(|f| **f).count();
    TrajectoryScores {
        dr: ratio(n_det as u64, targets.len() as u64),
        far: ratio(n_fa as u64, pred.len() as u64),
        n_targets: targets.len(),
        n_predictions: pred.len(),
        overlap_fractions,
        detected,
        false_alarms,
    }
}

/// Mean absolute difference of two equally long slices.
pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::Shape);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Closeness of two (standardized) sequences: their mean absolute
/// difference over all entries.
pub fn closeness(a: &FieldSequence, b: &FieldSequence) -> Result<f64, MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::Shape);
    }
    mean_abs_diff(a.data(), b.data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::track::TrackPoint;
    use alloc::vec;

    fn track(pts: &[(usize, f64, f64)]) -> Trajectory {
        Trajectory::new(
            pts.iter()
                .map(|&(t, lat, lon)| TrackPoint {
                    t,
                    point: GeoPoint::new(lat, lon).unwrap(),
                    msl: 0.0,
                    wind: 0.0,
                    elevation: 0.0,
                })
                .collect(),
        )
    }

    #[test]
    fn rate_examples() {
        let mut t = Volume::zeros(1, 10, 100);
        for k in 0..10 {
            t.data[k * 100] = 1.0;
        }
        let r = location_rates(&t, &t).unwrap();
        assert_eq!((r.tpr, r.fpr), (1.0, 0.0));
        let mut inv = t.clone();
        for x in &mut inv.data {
            *x = 1.0 - *x;
        }
        let r = location_rates(&inv, &t).unwrap();
        assert_eq!((r.tpr, r.tnr), (0.0, 0.0));

        let mut p = Volume::zeros(1, 10, 100);
        for k in 0..7 {
            p.data[k * 100] = 1.0;
        }
        p.data[1] = 1.0;
        p.data[2] = 1.0;
        let r = location_rates(&p, &t).unwrap();
        assert_eq!((r.tp, r.r#fn, r.fp, r.tn), (7, 3, 2, 988));
        assert_eq!(r.tpr, 0.7);
        assert_eq!(r.fnr, 0.3);
        assert_eq!(r.fpr, 2.0 / 990.0);
        assert!(location_rates(&p, &Volume::zeros(1, 1, 1)).is_err());
    }

    #[test]
    fn trajectory_examples() {
        let a = track(&(0..12).map(|t| (t, 10.0, 120.0 + t as f64)).collect::<Vec<_>>());
        let s = trajectory_scores(&[a.clone()], &[a.clone()], 2.0, 0.5);
        assert_eq!((s.dr, s.far), (1.0, 0.0));

        // prediction overlapping exactly half of the target
        let half = track(
            &(0..12)
                .map(|t| (t, if t < 6 { 10.5 } else { 20.0 }, 120.0 + t as f64))
                .collect::<Vec<_>>(),
        );
        let s = trajectory_scores(&[half], &[a.clone()], 2.0, 0.5);
        assert_eq!(s.overlap_fractions, vec![0.5]);
        assert_eq!(s.dr, 1.0);

        let far = track(&[(0, -30.0, 10.0), (1, -30.0, 11.0)]);
        let s = trajectory_scores(&[far], &[a], 2.0, 0.5);
        assert_eq!((s.dr, s.far), (0.0, 1.0));

        let s = trajectory_scores(&[], &[], 2.0, 0.5);
        assert!(s.dr.is_nan() && s.far.is_nan());
    }

    #[test]
    fn overlap_requires_same_step_and_strict_radius() {
        let a = track(&[(0, 0.0, 0.0), (1, 0.0, 1.0)]);
        let shifted = track(&[(1, 0.0, 0.0), (2, 0.0, 1.0)]);
        assert_eq!(overlap_count(&a, &shifted, 2.0), 1);
        let at_two = track(&[(0, 0.0, 2.0)]);
        assert_eq!(overlap_count(&a, &at_two, 2.0), 0);
    }

    #[test]
    fn closeness_examples() {
        let a = [0.0, 1.0, 2.0, 3.0];
        let b = [0.8, 1.0, 2.0, 3.0];
        assert!((mean_abs_diff(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(mean_abs_diff(&a, &a).unwrap(), 0.0);
        assert!(mean_abs_diff(&a, &b[..3]).is_err());
    }
}
