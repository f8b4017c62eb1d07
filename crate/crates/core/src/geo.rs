//! Spherical geometry on a mean-radius Earth and the regular lat/lon lattice.

use core::f64::consts::PI;

// inherent when std is linked (tests), libm otherwise
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("degenerate direction")]
    DegenerateDirection,
    #[error("invalid grid: {0}")]
    Grid(&'static str),
}

/// Wraps any longitude into `[0, 360)`.
pub fn normalize_lon(lon_deg: f64) -> f64 {
    let l = lon_deg % 360.0;
    let l = if l < 0.0 { l + 360.0 } else { l };
    // -1e-18 % 360 + 360 rounds to exactly 360
    if l >= 360.0 {
        0.0
    } else {
        l
    }
}

/// Signed longitude difference `b - a` wrapped into `(-180, 180]`.
pub fn lon_delta(a_deg: f64, b_deg: f64) -> f64 {
    let mut d = (b_deg - a_deg) % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        if !lat_deg.is_finite() || !lon_deg.is_finite() {
            return Err(GeoError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeoError::Latitude(lat_deg));
        }
        Ok(Self {
            lat_deg,
            lon_deg: normalize_lon(lon_deg),
        })
    }
}

/// Central angle between two points, in radians, in `[0, pi]`.
///
/// Evaluated in the atan2 form, which equals the clipped spherical law of
/// cosines but stays accurate for nearly coincident points. Arguments are
/// put in a canonical order first so the result is bitwise symmetric.
pub fn central_angle_rad(a: GeoPoint, b: GeoPoint) -> f64 {
    let (a, b) = if (a.lat_deg, a.lon_deg) <= (b.lat_deg, b.lon_deg) {
        (a, b)
    } else {
        (b, a)
    };
    let (pa, pb) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dl = lon_delta(a.lon_deg, b.lon_deg).to_radians();
    let (sa, ca) = pa.sin_cos();
    let (sb, cb) = pb.sin_cos();
    let (sdl, cdl) = dl.sin_cos();
    let x = sa * sb + ca * cb * cdl;
    let y1 = cb * sdl;
    let y2 = ca * sb - sa * cb * cdl;
    let y = (y1 * y1 + y2 * y2).sqrt();
    y.atan2(x).clamp(0.0, PI)
}

/// Great-circle separation in degrees.
pub fn great_circle_deg(a: GeoPoint, b: GeoPoint) -> f64 {
    central_angle_rad(a, b).to_degrees()
}

pub fn great_circle_km(a: GeoPoint, b: GeoPoint, earth_radius_km: f64) -> f64 {
    central_angle_rad(a, b) * earth_radius_km
}

/// Point reached after travelling an angular distance (radians) along an
/// initial compass bearing.
pub fn destination_point_rad(start: GeoPoint, bearing_deg: f64, angle_rad: f64) -> GeoPoint {
    if angle_rad == 0.0 {
        return start;
    }
    let phi1 = start.lat_deg.to_radians();
    let lambda1 = start.lon_deg.to_radians();
    let theta = bearing_deg.to_radians();
    let (sd, cd) = angle_rad.sin_cos();
    let (sp, cp) = phi1.sin_cos();
    let sin_phi2 = (sp * cd + cp * sd * theta.cos()).clamp(-1.0, 1.0);
    let phi2 = sin_phi2.asin();
    let lambda2 = lambda1 + (theta.sin() * sd * cp).atan2(cd - sp * sin_phi2);
    GeoPoint {
        lat_deg: phi2.to_degrees(),
        lon_deg: normalize_lon(lambda2.to_degrees()),
    }
}

/// Point reached after travelling `distance_km` along `bearing_deg`
/// (0 = north, 90 = east) on a sphere of radius `earth_radius_km`.
pub fn destination_point(
    start: GeoPoint,
    bearing_deg: f64,
    distance_km: f64,
    earth_radius_km: f64,
) -> GeoPoint {
    destination_point_rad(start, bearing_deg, distance_km / earth_radius_km)
}

/// Same as [`destination_point`] with the distance given in degrees of arc.
pub fn destination_point_deg(start: GeoPoint, bearing_deg: f64, distance_deg: f64) -> GeoPoint {
    destination_point_rad(start, bearing_deg, distance_deg.to_radians())
}

/// Compass bearing of a planar `(east, north)` vector, in `[0, 360)`.
pub fn bearing_of_planar_vector(east: f64, north: f64) -> Result<f64, GeoError> {
    if !(east.is_finite() && north.is_finite()) {
        return Err(GeoError::NonFinite);
    }
    if east == 0.0 && north == 0.0 {
        return Err(GeoError::DegenerateDirection);
    }
    let b = east.atan2(north).to_degrees();
    Ok(if b < 0.0 { b + 360.0 } else if b >= 360.0 { b - 360.0 } else { b })
}

/// Regular latitude/longitude lattice.
///
/// Row `i` sits at `lat0 + i * spacing` (south to north), column `j` at
/// `lon0 + j * spacing` wrapped into `[0, 360)`. A grid whose columns span
/// the full circle is periodic in longitude; otherwise it is a regional
/// window and neighbourhood operations do not wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub spacing: f64,
}

impl GridGeometry {
    pub fn new(
        rows: usize,
        cols: usize,
        lat0: f64,
        lon0: f64,
        spacing: f64,
    ) -> Result<Self, GeoError> {
        if rows == 0 || cols == 0 {
            return Err(GeoError::Grid("rows and cols must be positive"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GeoError::Grid("spacing must be positive"));
        }
        if !(lat0.is_finite() && lon0.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        let lat_top = lat0 + (rows - 1) as f64 * spacing;
        if lat0 < -90.0 || lat_top > 90.0 {
            return Err(GeoError::Grid("latitudes exceed [-90, 90]"));
        }
        if cols as f64 * spacing > 360.0 + 1e-9 {
            return Err(GeoError::Grid("longitudes overlap"));
        }
        Ok(Self {
            rows,
            cols,
            lat0,
            lon0: normalize_lon(lon0),
            spacing,
        })
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_periodic(&self) -> bool {
        (self.cols as f64 * self.spacing - 360.0).abs() < 1e-9
    }

    pub fn lat_of_row(&self, i: usize) -> f64 {
        self.lat0 + i as f64 * self.spacing
    }

    pub fn lon_of_col(&self, j: usize) -> f64 {
        normalize_lon(self.lon0 + j as f64 * self.spacing)
    }

    pub fn point(&self, i: usize, j: usize) -> GeoPoint {
        GeoPoint {
            lat_deg: self.lat_of_row(i),
            lon_deg: self.lon_of_col(j),
        }
    }

    /// Nearest lattice cell, or `None` when the point lies more than half a
    /// cell outside the lattice.
    pub fn nearest_cell(&self, p: GeoPoint) -> Option<(usize, usize)> {
        let fi = ((p.lat_deg - self.lat0) / self.spacing).round();
        if fi < 0.0 || fi > (self.rows - 1) as f64 {
            return None;
        }
        let off = normalize_lon(p.lon_deg - self.lon0);
        let mut fj = (off / self.spacing).round();
        if self.is_periodic() {
            if fj >= self.cols as f64 {
                fj -= self.cols as f64;
            }
        } else if fj > (self.cols - 1) as f64 {
            // west of lon0 by less than half a cell
            let back = 360.0 - off;
            if back <= 0.5 * self.spacing {
                fj = 0.0;
            } else {
                return None;
            }
        }
        Some((fi as usize, fj as usize))
    }

    /// Column `j + dj`, wrapping on periodic grids.
    pub fn shift_col(&self, j: usize, dj: isize) -> Option<usize> {
        let n = self.cols as isize;
        let k = j as isize + dj;
        if self.is_periodic() {
            Some(k.rem_euclid(n) as usize)
        } else if (0..n).contains(&k) {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn shift_row(&self, i: usize, di: isize) -> Option<usize> {
        let k = i as isize + di;
        if (0..self.rows as isize).contains(&k) {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Row/column half-widths of a box certain to contain every cell within
    /// `radius_deg` (great circle) of row `i`. `None` means scan all columns.
    pub(crate) fn search_box(&self, i: usize, radius_deg: f64) -> (usize, Option<usize>) {
        let dr = (radius_deg / self.spacing).ceil() as usize + 1;
        let lat = self.lat_of_row(i).abs() + radius_deg + self.spacing;
        if lat >= 89.0 {
            return (dr, None);
        }
        let c = lat.to_radians().cos();
        let dc = (radius_deg / (self.spacing * c)).ceil() as usize + 1;
        if 2 * dc + 1 >= self.cols {
            (dr, None)
        } else {
            (dr, Some(dc))
        }
    }

    /// Calls `f(i, j)` for every cell within `radius_deg` of cell `(i0, j0)`.
    pub fn for_each_within(
        &self,
        i0: usize,
        j0: usize,
        radius_deg: f64,
        mut f: impl FnMut(usize, usize, f64),
    ) {
        let centre = self.point(i0, j0);
        let (dr, dc) = self.search_box(i0, radius_deg);
        let i_lo = i0.saturating_sub(dr);
        let i_hi = (i0 + dr).min(self.rows - 1);
        for i in i_lo..=i_hi {
            let mut visit = |j: usize| {
                let d = great_circle_deg(centre, self.point(i, j));
                if d <= radius_deg {
                    f(i, j, d);
                }
            };
            match dc {
                None => (0..self.cols).for_each(&mut visit),
                Some(dc) => {
                    for dj in -(dc as isize)..=(dc as isize) {
                        if let Some(j) = self.shift_col(j0, dj) {
                            visit(j);
                        }
                    }
                }
            }
        }
    }
}
