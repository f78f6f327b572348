//! Report assembly and emission.
//!
//! [`build_report_model`] gathers everything a report shows into a
//! [`ReportModel`]; the Markdown, HTML and LaTeX emitters only read that
//! model, so every format shows the same clusters, colors and numbers.
//! Output bodies contain no wall-clock time, which keeps re-renders
//! byte-identical.

mod charts;
mod html;
mod latex;
mod map;
mod markdown;
mod overlay;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use charts::{distribution_svg, timeline_svg};
pub use html::{render_html, HtmlOptions, PAYLOAD_ELEMENT_ID, VIEWER_BUNDLE};
pub use latex::{latex_escape, render_latex, LatexEscapeError};
pub use map::{project, render_map, MapBounds, MapError, MapRender, DEGENERATE_SPAN_M, MAP_HEIGHT, MAP_WIDTH};
pub use markdown::render_markdown;
pub use overlay::{compose_overlay, compose_overlay_file, pixelate, OverlayError, PIXEL_BLOCK};

use crate::clustering::{ClusterSummary, Partition};
use crate::config::ReportFormat;
use crate::detection::{Detection, NormBox};
use crate::metrics::MetricsRecord;
use crate::palette::{cluster_color, Rgb};
use crate::session::{FrameRef, SceneDescription, SessionManifest};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("inconsistent report inputs: {0}")]
    InconsistentInputs(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    LatexEscape(#[from] LatexEscapeError),
}

impl ReportError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

fn hex<S: serde::Serializer>(c: &Rgb, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&c.hex())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub domain: String,
    pub recorded_at_us: i64,
    pub clip_count: usize,
    pub duration_us: i64,
}

/// Detections, masks and redactions for one cluster's representative frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClusterVisual {
    pub prompts: Vec<String>,
    pub detections: Vec<Detection>,
    pub redactions: Vec<NormBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterImage {
    pub frame: FrameRef,
    /// Absolute path of the source frame; never modified.
    #[serde(skip)]
    pub source: PathBuf,
    /// Overlay path relative to the report directory.
    pub asset: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSection {
    pub cluster_id: usize,
    #[serde(serialize_with = "hex")]
    pub color: Rgb,
    pub size: usize,
    pub fraction: f64,
    pub member_indices: Vec<usize>,
    pub representative_index: usize,
    pub representative_clip: u32,
    pub representative_text: String,
    pub image: Option<ClusterImage>,
    pub visual: ClusterVisual,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeoPoint {
    pub description_index: usize,
    pub clip_index: u32,
    pub cluster_id: usize,
    pub t_us: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub description_index: usize,
    pub clip_index: u32,
    pub cluster_id: usize,
    pub start_us: i64,
    pub end_us: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionEntry {
    pub cluster_id: usize,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescriptionEntry {
    pub index: usize,
    pub clip_index: u32,
    pub cluster_id: usize,
    /// Clip midpoint.
    pub t_us: i64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportModel {
    pub title: String,
    pub session: SessionMeta,
    /// Human-readable clustering configuration.
    pub clustering: String,
    pub clusters: Vec<ClusterSection>,
    pub geo_points: Vec<GeoPoint>,
    /// `(lat, lon)` of the recorded track, in time order.
    pub track: Vec<(f64, f64)>,
    pub timeline: Vec<TimelineEntry>,
    pub distribution: Vec<DistributionEntry>,
    pub descriptions: Vec<DescriptionEntry>,
    pub metrics: Vec<MetricsRecord>,
    pub notices: Vec<String>,
}

impl ReportModel {
    pub fn color_of(&self, cluster_id: usize) -> Rgb {
        self.clusters
            .iter()
            .find(|c| c.cluster_id == cluster_id)
            .map(|c| c.color)
            .unwrap_or_else(|| cluster_color(cluster_id))
    }

    pub fn has_map(&self) -> bool {
        !self.geo_points.is_empty()
    }
}

pub struct ReportInputs<'a> {
    pub session: &'a SessionManifest,
    pub descriptions: &'a [SceneDescription],
    pub partition: &'a Partition,
    pub summaries: &'a [ClusterSummary],
    /// Keyed by cluster id; clusters without an entry show no overlay data.
    pub visuals: BTreeMap<usize, ClusterVisual>,
    pub metrics: Vec<MetricsRecord>,
    pub clustering: String,
    pub title: Option<String>,
}

pub fn build_report_model(inputs: ReportInputs<'_>) -> Result<ReportModel, ReportError> {
    let ReportInputs {
        session,
        descriptions,
        partition,
        summaries,
        mut visuals,
        metrics,
        clustering,
        title,
    } = inputs;
    let bad = |m: String| Err(ReportError::InconsistentInputs(m));
    if partition.len() != descriptions.len() {
        return bad(format!(
            "{} labels for {} descriptions",
            partition.len(),
            descriptions.len()
        ));
    }
    if descriptions.is_empty() {
        return bad("no descriptions".into());
    }
    let by_id: BTreeMap<usize, &ClusterSummary> = summaries.iter().map(|s| (s.cluster_id, s)).collect();
    if by_id.len() != summaries.len() {
        return bad("duplicate cluster summary".into());
    }
    let members = partition.clusters();
    for (id, m) in members.iter().enumerate() {
        let Some(s) = by_id.get(&id) else {
            return bad(format!("cluster {id} has no summary"));
        };
        if !m.contains(&s.representative_index) {
            return bad(format!(
                "representative {} of cluster {id} is not a member",
                s.representative_index
            ));
        }
    }
    if let Some(extra) = by_id.keys().find(|&&id| id >= partition.k()) {
        return bad(format!("summary for unknown cluster {extra}"));
    }
    let mut seen_clips = BTreeSet::new();
    for d in descriptions {
        if session.clip(d.clip_index).is_none() {
            return bad(format!("description for unknown clip {}", d.clip_index));
        }
        if !seen_clips.insert(d.clip_index) {
            return bad(format!("two descriptions for clip {}", d.clip_index));
        }
    }

    let n = descriptions.len();
    let labels = partition.labels();
    let entries: Vec<DescriptionEntry> = descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| DescriptionEntry {
            index: i,
            clip_index: d.clip_index,
            cluster_id: labels[i],
            t_us: session.clip(d.clip_index).expect("checked").midpoint().as_micros(),
            text: d.text.clone(),
        })
        .collect();

    let clusters = members
        .iter()
        .enumerate()
        .map(|(id, m)| {
            let s = by_id[&id];
            let rep = &descriptions[s.representative_index];
            ClusterSection {
                cluster_id: id,
                color: cluster_color(id),
                size: m.len(),
                fraction: m.len() as f64 / n as f64,
                member_indices: m.clone(),
                representative_index: s.representative_index,
                representative_clip: rep.clip_index,
                representative_text: rep.text.clone(),
                image: Some(ClusterImage {
                    frame: s.representative_frame.clone(),
                    source: session.frame_path(&s.representative_frame),
                    asset: format!("assets/cluster_{id:02}.png"),
                }),
                visual: visuals.remove(&id).unwrap_or_default(),
            }
        })
        .collect::<Vec<_>>();

    let distribution = clusters
        .iter()
        .map(|c| DistributionEntry {
            cluster_id: c.cluster_id,
            count: c.size,
            fraction: c.fraction,
        })
        .collect();

    let mut timeline: Vec<TimelineEntry> = descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let clip = session.clip(d.clip_index).expect("checked");
            TimelineEntry {
                description_index: i,
                clip_index: d.clip_index,
                cluster_id: labels[i],
                start_us: clip.start_time.as_micros(),
                end_us: clip.end_time.as_micros(),
            }
        })
        .collect();
    timeline.sort_by_key(|t| (t.start_us, t.clip_index));

    let geo_points: Vec<GeoPoint> = descriptions
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let p = d.pose.as_ref().filter(|p| p.has_valid_coordinates())?;
            Some(GeoPoint {
                description_index: i,
                clip_index: d.clip_index,
                cluster_id: labels[i],
                t_us: p.timestamp.as_micros(),
                lat: p.latitude,
                lon: p.longitude,
            })
        })
        .collect();

    let mut notices = Vec::new();
    if geo_points.is_empty() {
        notices.push("No geo data: the session has no usable track, so the map is omitted.".to_string());
    } else if geo_points.len() < n {
        notices.push(format!(
            "{} of {n} descriptions have no valid position and are not on the map.",
            n - geo_points.len()
        ));
    }

    let duration_us = match (session.clips.first(), session.clips.last()) {
        (Some(a), Some(b)) => b.end_time.as_micros() - a.start_time.as_micros(),
        _ => 0,
    };

    Ok(ReportModel {
        title: title.unwrap_or_else(|| format!("Session report: {}", session.session_id)),
        session: SessionMeta {
            session_id: session.session_id.clone(),
            domain: session.domain.display_name().to_string(),
            recorded_at_us: session.recorded_at.as_micros(),
            clip_count: session.clips.len(),
            duration_us,
        },
        clustering,
        clusters,
        geo_points,
        track: session
            .track
            .iter()
            .filter(|p| p.has_valid_coordinates())
            .map(|p| (p.latitude, p.longitude))
            .collect(),
        timeline,
        distribution,
        descriptions: entries,
        metrics,
        notices,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderTarget {
    pub format: ReportFormat,
    pub output_dir: PathBuf,
    /// HTML only: inline images as `data:` URIs.
    pub embed_assets: bool,
    /// HTML only: tile URL template handed to the viewer (`--allow-tiles`).
    pub tile_url: Option<String>,
}

fn write(path: &Path, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| ReportError::io(path, e))?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Shared files every format links to: overlays, charts and the map.
/// Returns the encoded overlay PNGs keyed by cluster id.
fn emit_assets(model: &ReportModel, dir: &Path, written: &mut Vec<PathBuf>) -> Result<BTreeMap<usize, Vec<u8>>, ReportError> {
    let mut pngs = BTreeMap::new();
    for c in &model.clusters {
        if let Some(img) = &c.image {
            let png = compose_overlay_file(&img.source, &c.visual.detections, &c.visual.redactions, c.color)?;
            write(&dir.join(&img.asset), &png, written)?;
            pngs.insert(c.cluster_id, png);
        }
    }
    write(&dir.join("assets/timeline.svg"), timeline_svg(model).as_bytes(), written)?;
    write(&dir.join("assets/distribution.svg"), distribution_svg(model).as_bytes(), written)?;
    if let Ok(m) = render_map(model) {
        write(&dir.join("map.svg"), m.svg.as_bytes(), written)?;
        let geojson = serde_json::to_string_pretty(&m.geojson).expect("geojson serializes");
        write(&dir.join("map.geojson"), format!("{geojson}\n").as_bytes(), written)?;
    }
    Ok(pngs)
}

/// Writes one format plus the shared assets; returns every file written.
pub fn emit(model: &ReportModel, target: &RenderTarget) -> Result<Vec<PathBuf>, ReportError> {
    let dir = &target.output_dir;
    fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    let mut written = Vec::new();
    let pngs = emit_assets(model, dir, &mut written)?;
    match target.format {
        ReportFormat::Md => write(&dir.join("report.md"), render_markdown(model).as_bytes(), &mut written)?,
        ReportFormat::Tex => write(&dir.join("report.tex"), render_latex(model)?.as_bytes(), &mut written)?,
        ReportFormat::Html => {
            let opts = HtmlOptions {
                embed_assets: target.embed_assets,
                tile_url: target.tile_url.clone(),
            };
            write(&dir.join("report.html"), render_html(model, &pngs, &opts).as_bytes(), &mut written)?
        }
    }
    Ok(written)
}

pub(crate) fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Seconds since session start, with one decimal.
pub(crate) fn rel_seconds(model: &ReportModel, t_us: i64) -> String {
    format!("{:.1}", (t_us - model.session.recorded_at_us) as f64 / 1e6)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::clustering::ClusterSummary;
    use crate::session::{Clip, DescriptionSource, Domain, GeoPose};
    use crate::time::Timestamp;

    /// Session of `labels.len()` 5 s clips moving east, one description per clip.
    pub fn model(labels: &[usize], with_track: bool) -> ReportModel {
        let n = labels.len();
        let clips: Vec<Clip> = (0..n)
            .map(|i| {
                let s = i as i64 * 5_000_000;
                Clip::new(i as u32, Timestamp(s), Timestamp(s + 5_000_000), vec![FrameRef::new(format!("f{i}.png"))])
            })
            .collect();
        let track = if with_track {
            vec![
                GeoPose::new(Timestamp(0), 49.75, 6.63),
                GeoPose::new(Timestamp(n as i64 * 5_000_000), 49.75, 6.65),
            ]
        } else {
            vec![]
        };
        let session = SessionManifest {
            session_id: "s1".into(),
            domain: Domain::City,
            recorded_at: Timestamp(0),
            clips,
            track,
            root: "/nonexistent".into(),
        };
        let descriptions: Vec<SceneDescription> = (0..n)
            .map(|i| {
                SceneDescription::anchored(
                    &session,
                    i as u32,
                    &format!("Scene {i} of group {}", labels[i]),
                    Timestamp(0),
                    DescriptionSource::Precomputed,
                )
                .unwrap()
            })
            .collect();
        let partition = Partition::from_labels(labels.iter().copied()).unwrap();
        let summaries: Vec<ClusterSummary> = partition
            .clusters()
            .iter()
            .enumerate()
            .map(|(id, m)| ClusterSummary {
                cluster_id: id,
                member_indices: m.clone(),
                representative_index: m[0],
                representative_frame: FrameRef::new(format!("f{}.png", m[0])),
                color: cluster_color(id),
            })
            .collect();
        build_report_model(ReportInputs {
            session: &session,
            descriptions: &descriptions,
            partition: &partition,
            summaries: &summaries,
            visuals: BTreeMap::new(),
            metrics: vec![],
            clustering: "cosine, threshold 0.30, average linkage".into(),
            title: None,
        })
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::model;
    use super::*;

    #[test]
    fn distribution_fractions() {
        let labels: Vec<usize> = "SCBSSCSCSBSCSSCSCSBSCSCB"
            .chars()
            .map(|c| match c {
                'S' => 0,
                'C' => 1,
                _ => 2,
            })
            .collect();
        let m = model(&labels, true);
        let f: Vec<f64> = m.distribution.iter().map(|d| d.fraction).collect();
        assert_eq!(f, [0.5, 8.0 / 24.0, 4.0 / 24.0]);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(m.timeline.len(), 24);
        assert_eq!(m.geo_points.len(), 24);
        let mut idx: Vec<usize> = m.timeline.iter().map(|t| t.description_index).collect();
        idx.sort();
        assert_eq!(idx, (0..24).collect::<Vec<_>>());
    }

    #[test]
    fn single_cluster() {
        let m = model(&[0, 0, 0], true);
        assert_eq!(m.distribution.len(), 1);
        assert_eq!(m.distribution[0].fraction, 1.0);
        assert!(m.timeline.iter().all(|t| t.cluster_id == 0));
    }

    #[test]
    fn no_track_means_no_map() {
        let m = model(&[0, 1], false);
        assert!(!m.has_map());
        assert_eq!(m.notices.len(), 1);
        assert!(matches!(render_map(&m), Err(MapError::NoGeoData)));
    }

    #[test]
    fn missing_summary_is_inconsistent() {
        use crate::session::{Clip, DescriptionSource, Domain};
        use crate::time::Timestamp;
        let session = SessionManifest {
            session_id: "s".into(),
            domain: Domain::City,
            recorded_at: Timestamp(0),
            clips: vec![
                Clip::new(0, Timestamp(0), Timestamp(1), vec![FrameRef::new("a.png")]),
                Clip::new(1, Timestamp(1), Timestamp(2), vec![FrameRef::new("b.png")]),
            ],
            track: vec![],
            root: ".".into(),
        };
        let d: Vec<SceneDescription> = (0..2)
            .map(|i| SceneDescription::anchored(&session, i, "x", Timestamp(0), DescriptionSource::Gateway).unwrap())
            .collect();
        let p = Partition::from_labels([0, 1]).unwrap();
        let summaries = vec![ClusterSummary {
            cluster_id: 0,
            member_indices: vec![0],
            representative_index: 0,
            representative_frame: FrameRef::new("a.png"),
            color: cluster_color(0),
        }];
        let err = build_report_model(ReportInputs {
            session: &session,
            descriptions: &d,
            partition: &p,
            summaries: &summaries,
            visuals: BTreeMap::new(),
            metrics: vec![],
            clustering: String::new(),
            title: None,
        })
        .unwrap_err();
        assert!(matches!(err, ReportError::InconsistentInputs(ref m) if m.contains("cluster 1")));
    }
}
