use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    /// Time-step index.
    pub t: usize,
    pub point: GeoPoint,
    /// Mean sea level pressure at the centre, Pa.
    pub msl: f64,
    /// Regional maximum 10 m wind, m/s.
    pub wind: f64,
    /// Surface elevation, m.
    pub elevation: f64,
}

/// Time-ordered track; `t` strictly increases along `points`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrackPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrackPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_t(&self) -> Option<usize> {
        self.points.first().map(|p| p.t)
    }

    pub fn last_t(&self) -> Option<usize> {
        self.points.last().map(|p| p.t)
    }

    pub fn at_time(&self, t: usize) -> Option<&TrackPoint> {
        self.points
            .binary_search_by_key(&t, |p| p.t)
            .ok()
            .map(|k| &self.points[k])
    }

    pub fn is_time_ordered(&self) -> bool {
        self.points.windows(2).all(|w| w[0].t < w[1].t)
    }
}
