//! Plate carrée track maps as self-contained SVG.

use std::fmt::Write as _;

use tcsteer_core::geo::{lon_delta, normalize_lon, GridGeometry};

use crate::geojson::{Role, TrackSet};

const PX_PER_DEG: f64 = 12.0;
const MARGIN: f64 = 40.0;

struct Frame {
    lon_ref: f64,
    from_grid: bool,
    lon_min: f64,
    lon_max: f64,
    lat_min: f64,
    lat_max: f64,
}

impl Frame {
    /// Unwrapped longitude: east of the grid origin when a grid is known,
    /// otherwise within 180 degrees of the first point.
    fn lon(&self, lon: f64) -> f64 {
        if self.from_grid {
            self.lon_ref + normalize_lon(lon - self.lon_ref)
        } else {
            self.lon_ref + lon_delta(self.lon_ref, lon)
        }
    }

    fn x(&self, lon: f64) -> f64 {
        MARGIN + (self.lon(lon) - self.lon_min) * PX_PER_DEG
    }

    fn y(&self, lat: f64) -> f64 {
        MARGIN + (self.lat_max - lat) * PX_PER_DEG
    }

    fn width(&self) -> f64 {
        2.0 * MARGIN + (self.lon_max - self.lon_min) * PX_PER_DEG
    }

    fn height(&self) -> f64 {
        2.0 * MARGIN + (self.lat_max - self.lat_min) * PX_PER_DEG
    }
}

fn frame(sets: &[TrackSet]) -> Frame {
    let grid: Option<GridGeometry> = sets.iter().find_map(|s| s.grid);
    let first = sets
        .iter()
        .flat_map(|s| &s.tracks)
        .flat_map(|t| &t.track.points)
        .next()
        .map(|p| p.point.lon_deg);
    let mut f = Frame {
        lon_ref: grid.map(|g| g.lon0).or(first).unwrap_or(0.0),
        from_grid: grid.is_some(),
        lon_min: f64::INFINITY,
        lon_max: f64::NEG_INFINITY,
        lat_min: f64::INFINITY,
        lat_max: f64::NEG_INFINITY,
    };
    let extend = |f: &mut Frame, lat: f64, lon: f64| {
        let x = f.lon(lon);
        f.lon_min = f.lon_min.min(x);
        f.lon_max = f.lon_max.max(x);
        f.lat_min = f.lat_min.min(lat);
        f.lat_max = f.lat_max.max(lat);
    };
    if let Some(g) = grid {
        extend(&mut f, g.lat0, g.lon0);
        let span = (g.cols - 1) as f64 * g.spacing;
        f.lon_max = f.lon_max.max(g.lon0 + span);
        f.lat_max = f.lat_max.max(g.lat_of_row(g.rows - 1));
    }
    for s in sets {
        for t in &s.tracks {
            for p in &t.track.points {
                extend(&mut f, p.point.lat_deg, p.point.lon_deg);
            }
        }
    }
    if !f.lon_min.is_finite() {
        f.lon_min = 0.0;
        f.lon_max = 10.0;
        f.lat_min = 0.0;
        f.lat_max = 10.0;
    }
    f.lon_min = (f.lon_min - 1.0).floor();
    f.lon_max = (f.lon_max + 1.0).ceil();
    f.lat_min = (f.lat_min - 1.0).floor().max(-90.0);
    f.lat_max = (f.lat_max + 1.0).ceil().min(90.0);
    f
}

fn dash(role: Role) -> &'static str {
    match role {
        Role::Original => "",
        Role::Adversarial => " stroke-dasharray=\"6 3\"",
        Role::Detected => " stroke-dasharray=\"2 2\"",
    }
}

fn label(role: Role) -> &'static str {
    match role {
        Role::Original => "original",
        Role::Adversarial => "adversarial",
        Role::Detected => "detected",
    }
}

/// Renders all tracks of all sets on one map. Output depends only on the
/// input, so identical tracks give identical files.
pub fn render(sets: &[TrackSet]) -> String {
    let f = frame(sets);
    let (w, h) = (f.width(), f.height());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.1} {h:.1}\" font-family=\"sans-serif\" font-size=\"10\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#fbfbf8\"/>");
    let _ = writeln!(s, "<g stroke=\"#d0d0c8\" stroke-width=\"0.5\">");
    let step = if f.lon_max - f.lon_min > 60.0 { 10 } else { 5 };
    let mut lon = (f.lon_min as i64).div_euclid(step) * step;
    while (lon as f64) <= f.lon_max {
        if lon as f64 >= f.lon_min {
            let x = f.x(lon as f64);
            let _ = writeln!(
                s,
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\"/>",
                MARGIN,
                h - MARGIN
            );
        }
        lon += step;
    }
    let mut lat = (f.lat_min as i64).div_euclid(step) * step;
    while (lat as f64) <= f.lat_max {
        if lat as f64 >= f.lat_min {
            let y = f.y(lat as f64);
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\"/>",
                MARGIN,
                w - MARGIN
            );
        }
        lat += step;
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g fill=\"#606060\">");
    let mut lon = (f.lon_min as i64).div_euclid(step) * step;
    while (lon as f64) <= f.lon_max {
        if lon as f64 >= f.lon_min {
            let shown = normalize_lon(lon as f64);
            let shown = if shown > 180.0 { shown - 360.0 } else { shown };
            let hemi = if shown < 0.0 { "W" } else { "E" };
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}°{hemi}</text>",
                f.x(lon as f64),
                h - MARGIN + 14.0,
                shown.abs()
            );
        }
        lon += step;
    }
    let mut lat = (f.lat_min as i64).div_euclid(step) * step;
    while (lat as f64) <= f.lat_max {
        if lat as f64 >= f.lat_min {
            let hemi = if lat < 0 { "S" } else { "N" };
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}°{hemi}</text>",
                MARGIN - 4.0,
                f.y(lat as f64) + 3.0,
                lat.abs()
            );
        }
        lat += step;
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#808080\"/>",
        w - 2.0 * MARGIN,
        h - 2.0 * MARGIN
    );

    let mut roles = Vec::new();
    for set in sets {
        for t in &set.tracks {
            if !roles.contains(&t.role) {
                roles.push(t.role);
            }
            let colour = t.role.colour();
            let pts: Vec<String> = t
                .track
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", f.x(p.point.lon_deg), f.y(p.point.lat_deg)))
                .collect();
            let _ = writeln!(
                s,
                "<polyline class=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"{}/>",
                label(t.role),
                pts.join(" "),
                dash(t.role)
            );
            for (k, p) in t.track.points.iter().enumerate() {
                let r = if k == 0 { 3.5 } else { 2.0 };
                let _ = writeln!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{colour}\"/>",
                    f.x(p.point.lon_deg),
                    f.y(p.point.lat_deg)
                );
            }
        }
    }
    for (k, role) in roles.iter().enumerate() {
        let y = MARGIN + 12.0 + 14.0 * k as f64;
        let x = MARGIN + 8.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"2\"{}/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            x + 20.0,
            role.colour(),
            dash(*role),
            x + 26.0,
            y + 3.0,
            label(*role)
        );
    }
    s.push_str("</svg>\n");
    s
}
