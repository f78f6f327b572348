//! Point layer of the report map: GeoJSON for tools and the HTML viewer,
//! and a static SVG under an equirectangular projection.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::{escape_xml, ReportModel};

pub const MAP_WIDTH: f64 = 800.0;
pub const MAP_HEIGHT: f64 = 600.0;
/// Margin on every side, as a fraction of the canvas size.
const MARGIN: f64 = 0.05;
/// Span a zero-extent axis is widened to, in meters.
pub const DEGENERATE_SPAN_M: f64 = 100.0;
const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("no description has a valid position")]
    NoGeoData,
}

/// Bounding box after degenerate-axis widening, plus the fitted transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapBounds {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
    /// Longitude shrink factor, `cos` of the center latitude.
    kx: f64,
    scale: f64,
}

impl MapBounds {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Option<Self> {
        let (mut min_lat, mut max_lat, mut min_lon, mut max_lon) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (lat, lon) in points {
            min_lat = min_lat.min(lat);
            max_lat = max_lat.max(lat);
            min_lon = min_lon.min(lon);
            max_lon = max_lon.max(lon);
        }
        if !min_lat.is_finite() {
            return None;
        }
        let kx = ((min_lat + max_lat) / 2.0).to_radians().cos().max(1e-6);
        if max_lat == min_lat {
            let half = DEGENERATE_SPAN_M / 2.0 / METERS_PER_DEG_LAT;
            min_lat -= half;
            max_lat += half;
        }
        if max_lon == min_lon {
            let half = DEGENERATE_SPAN_M / 2.0 / (METERS_PER_DEG_LAT * kx);
            min_lon -= half;
            max_lon += half;
        }
        let w = (max_lon - min_lon) * kx;
        let h = max_lat - min_lat;
        let scale = (MAP_WIDTH * (1.0 - 2.0 * MARGIN) / w).min(MAP_HEIGHT * (1.0 - 2.0 * MARGIN) / h);
        Some(Self {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
            kx,
            scale,
        })
    }
}

/// SVG coordinates of `(lat, lon)`; north is up, the box is centered.
pub fn project(b: &MapBounds, lat: f64, lon: f64) -> (f64, f64) {
    let lat_c = (b.min_lat + b.max_lat) / 2.0;
    let lon_c = (b.min_lon + b.max_lon) / 2.0;
    (
        MAP_WIDTH / 2.0 + (lon - lon_c) * b.kx * b.scale,
        MAP_HEIGHT / 2.0 - (lat - lat_c) * b.scale,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapRender {
    pub geojson: Value,
    pub svg: String,
    pub bounds: MapBounds,
}

pub fn geojson(model: &ReportModel) -> Value {
    let features: Vec<Value> = model
        .geo_points
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
                "properties": {
                    "cluster_id": p.cluster_id,
                    "color": model.color_of(p.cluster_id).hex(),
                    "text": model.descriptions[p.description_index].text,
                    "clip_index": p.clip_index,
                    "t_us": p.t_us,
                    "description_index": p.description_index,
                }
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn render_map(model: &ReportModel) -> Result<MapRender, MapError> {
    if model.geo_points.is_empty() {
        return Err(MapError::NoGeoData);
    }
    let bounds = MapBounds::fit(
        model
            .geo_points
            .iter()
            .map(|p| (p.lat, p.lon))
            .chain(model.track.iter().copied()),
    )
    .ok_or(MapError::NoGeoData)?;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{MAP_WIDTH}" height="{MAP_HEIGHT}" viewBox="0 0 {MAP_WIDTH} {MAP_HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r##"<rect width="{MAP_WIDTH}" height="{MAP_HEIGHT}" fill="#F7F7F4"/>"##);
    if model.track.len() > 1 {
        let pts: Vec<String> = model
            .track
            .iter()
            .map(|&(lat, lon)| {
                let (x, y) = project(&bounds, lat, lon);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline class="track" points="{}" fill="none" stroke="#9A9A9A" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    let _ = writeln!(svg, r#"<g class="points">"#);
    for p in &model.geo_points {
        let (x, y) = project(&bounds, p.lat, p.lon);
        let _ = writeln!(
            svg,
            r##"<circle class="point" data-index="{}" data-cluster="{}" cx="{x:.2}" cy="{y:.2}" r="6" fill="{}" stroke="#FFFFFF" stroke-width="1.5"><title>{}</title></circle>"##,
            p.description_index,
            p.cluster_id,
            model.color_of(p.cluster_id).hex(),
            escape_xml(&model.descriptions[p.description_index].text)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r##"<text x="{:.0}" y="{:.0}" font-size="12" fill="#555555">{:.5}, {:.5} to {:.5}, {:.5}</text>"##,
        MAP_WIDTH * MARGIN,
        MAP_HEIGHT - 8.0,
        bounds.min_lat,
        bounds.min_lon,
        bounds.max_lat,
        bounds.max_lon
    );
    svg.push_str("</svg>\n");

    Ok(MapRender {
        geojson: geojson(model),
        svg,
        bounds,
    })
}
