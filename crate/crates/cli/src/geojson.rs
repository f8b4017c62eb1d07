//! Trajectories as GeoJSON: one LineString feature per track with
//! per-point `t`, `msl`, `wind` and `elevation` arrays, plus a `role`
//! property. The collection may carry the lattice and the number of time
//! steps as foreign members `grid` and `times`.
//!
//! Longitudes are written as stored, in `[0, 360)`, so tracks crossing the
//! antimeridian stay continuous and reload bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tcsteer_core::geo::{GeoPoint, GridGeometry};
use tcsteer_core::track::{TrackPoint, Trajectory};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Original,
    Adversarial,
    Detected,
}

impl Role {
    /// Stroke colour used by the renderer.
    pub fn colour(self) -> &'static str {
        match self {
            Role::Original => "#1f5fbf",
            Role::Adversarial => "#d62728",
            Role::Detected => "#2a2a2a",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleTrack {
    pub role: Role,
    pub track: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    pub grid: Option<GridGeometry>,
    pub times: Option<usize>,
    pub tracks: Vec<RoleTrack>,
}

impl TrackSet {
    pub fn new(grid: GridGeometry, times: usize, role: Role, tracks: &[Trajectory]) -> Self {
        Self {
            grid: Some(grid),
            times: Some(times),
            tracks: tracks
                .iter()
                .map(|t| RoleTrack {
                    role,
                    track: t.clone(),
                })
                .collect(),
        }
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.tracks.iter().map(|t| t.track.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Collection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    times: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: Geometry,
    properties: Properties,
}

#[derive(Serialize, Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct Properties {
    role: Role,
    t: Vec<usize>,
    msl: Vec<f64>,
    wind: Vec<f64>,
    elevation: Vec<f64>,
}

pub fn to_string(set: &TrackSet) -> String {
    let features = set
        .tracks
        .iter()
        .map(|rt| {
            let p = &rt.track.points;
            Feature {
                kind: "Feature".into(),
                geometry: Geometry {
                    kind: "LineString".into(),
                    coordinates: p.iter().map(|q| [q.point.lon_deg, q.point.lat_deg]).collect(),
                },
                properties: Properties {
                    role: rt.role,
                    t: p.iter().map(|q| q.t).collect(),
                    msl: p.iter().map(|q| q.msl).collect(),
                    wind: p.iter().map(|q| q.wind).collect(),
                    elevation: p.iter().map(|q| q.elevation).collect(),
                },
            }
        })
        .collect();
    let c = Collection {
        kind: "FeatureCollection".into(),
        features,
        grid: set.grid,
        times: set.times,
    };
    serde_json::to_string_pretty(&c).expect("serializable")
}

pub fn from_str(s: &str) -> std::result::Result<TrackSet, String> {
    let c: Collection = serde_json::from_str(s).map_err(|e| e.to_string())?;
    if c.kind != "FeatureCollection" {
        return Err("expected a FeatureCollection".into());
    }
    let mut tracks = Vec::with_capacity(c.features.len());
    for (k, f) in c.features.into_iter().enumerate() {
        if f.geometry.kind != "LineString" {
            return Err(format!("feature {k}: expected a LineString"));
        }
        let pr = f.properties;
        let n = f.geometry.coordinates.len();
        if [pr.t.len(), pr.msl.len(), pr.wind.len(), pr.elevation.len()]
            .iter()
            .any(|&m| m != n)
        {
            return Err(format!("feature {k}: property arrays differ in length"));
        }
        let mut points = Vec::with_capacity(n);
        for q in 0..n {
            let [lon, lat] = f.geometry.coordinates[q];
            let point = GeoPoint::new(lat, lon).map_err(|e| format!("feature {k}: {e}"))?;
            points.push(TrackPoint {
                t: pr.t[q],
                point,
                msl: pr.msl[q],
                wind: pr.wind[q],
                elevation: pr.elevation[q],
            });
        }
        let track = Trajectory::new(points);
        if !track.is_time_ordered() {
            return Err(format!("feature {k}: times must increase"));
        }
        tracks.push(RoleTrack {
            role: pr.role,
            track,
        });
    }
    Ok(TrackSet {
        grid: c.grid,
        times: c.times,
        tracks,
    })
}

pub fn write_tracks(set: &TrackSet, path: &Path) -> Result<()> {
    fs::write(path, to_string(set)).map_err(|e| Error::io(path, e))
}

pub fn read_tracks(path: &Path) -> Result<TrackSet> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&s).map_err(|m| Error::format(path, m))
}
