//! Sessions, clips, poses and scene descriptions.
//!
//! A session directory holds `manifest.json`, a `frames/` folder and,
//! optionally, `descriptions.jsonl` and `ground_truth.json`. Frames are
//! referenced by relative path and never loaded here.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::time::Timestamp;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DESCRIPTIONS_FILE: &str = "descriptions.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

pub const DEFAULT_CLIP_LENGTH_S: f64 = 5.0;
pub const DEFAULT_SAMPLING_RATE_HZ: f64 = 1.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("no manifest.json in {0}")]
    MissingManifest(PathBuf),
    #[error("schema violation at `{field}`: {detail}")]
    SchemaViolation { field: String, detail: String },
    #[error("track timestamps not strictly increasing at track[{index}]")]
    UnsortedTrack { index: usize },
    #[error("missing frame {0}")]
    MissingFrame(PathBuf),
    #[error("clip {0} has no frames")]
    EmptyClip(u32),
    #[error("sampling rate must be a positive finite number, got {0}")]
    InvalidRate(f64),
    #[error("pose track is empty")]
    EmptyTrack,
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl SessionError {
    fn schema(field: impl Into<String>, detail: impl Into<String>) -> Self {
        SessionError::SchemaViolation {
            field: field.into(),
            detail: detail.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        SessionError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// Recording domain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    CampusIndoor,
    CampusOutdoor,
    City,
    Other(String),
}

impl Domain {
    pub fn as_key(&self) -> &str {
        match self {
            Domain::CampusIndoor => "campus_indoor",
            Domain::CampusOutdoor => "campus_outdoor",
            Domain::City => "city",
            Domain::Other(s) => s,
        }
    }

    pub fn display_name(&self) -> &str {
        match self {
            Domain::CampusIndoor => "Campus Indoor",
            Domain::CampusOutdoor => "Campus Outdoor",
            Domain::City => "City",
            Domain::Other(s) => s,
        }
    }

    pub fn parse(raw: &str) -> Self {
        let folded: String = raw
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match folded.as_str() {
            "campusindoor" => Domain::CampusIndoor,
            "campusoutdoor" => Domain::CampusOutdoor,
            "city" => Domain::City,
            _ => Domain::Other(raw.to_string()),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_key())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw.trim().is_empty() {
            return Err(serde::de::Error::custom("domain must be non-empty"));
        }
        Ok(Domain::parse(&raw))
    }
}

/// Frame path relative to the session directory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameRef(pub String);

impl FrameRef {
    pub fn new(rel: impl Into<String>) -> Self {
        FrameRef(rel.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn resolve(&self, root: &Path) -> PathBuf {
        root.join(&self.0)
    }
}

impl fmt::Display for FrameRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPose {
    #[serde(rename = "t_us")]
    pub timestamp: Timestamp,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    #[serde(rename = "alt", default, skip_serializing_if = "Option::is_none")]
    pub altitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

impl GeoPose {
    pub fn new(timestamp: Timestamp, latitude: f64, longitude: f64) -> Self {
        Self {
            timestamp,
            latitude,
            longitude,
            altitude: None,
            heading: None,
        }
    }

    pub fn has_valid_coordinates(&self) -> bool {
        (-90.0..=90.0).contains(&self.latitude) && (-180.0..=180.0).contains(&self.longitude)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub clip_index: u32,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub frame_refs: Vec<FrameRef>,
    /// Subset of `frame_refs` picked by [`sample_frames`]; all frames until then.
    pub sampled_frame_refs: Vec<FrameRef>,
}

impl Clip {
    pub fn new(clip_index: u32, start_time: Timestamp, end_time: Timestamp, frame_refs: Vec<FrameRef>) -> Self {
        Self {
            clip_index,
            start_time,
            end_time,
            sampled_frame_refs: frame_refs.clone(),
            frame_refs,
        }
    }

    pub fn duration_us(&self) -> i64 {
        self.end_time.as_micros() - self.start_time.as_micros()
    }

    pub fn midpoint(&self) -> Timestamp {
        self.start_time.midpoint(self.end_time)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionManifest {
    pub session_id: String,
    pub domain: Domain,
    pub recorded_at: Timestamp,
    pub clips: Vec<Clip>,
    pub track: Vec<GeoPose>,
    /// Directory the manifest was loaded from; frame refs resolve against it.
    pub root: PathBuf,
}

impl SessionManifest {
    pub fn frame_path(&self, frame: &FrameRef) -> PathBuf {
        frame.resolve(&self.root)
    }

    pub fn clip(&self, clip_index: u32) -> Option<&Clip> {
        self.clips.iter().find(|c| c.clip_index == clip_index)
    }

    /// Serializes to the `manifest.json` wire form.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(RawManifest::from(self)).expect("manifest serializes")
    }

    /// Parses and validates a manifest without touching the filesystem.
    pub fn from_json_str(text: &str, root: &Path) -> Result<Self, SessionError> {
        let raw = parse_raw(text)?;
        let violations = raw.violations();
        if let Some(first) = violations.into_iter().next() {
            return Err(first);
        }
        Ok(raw.into_manifest(root))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClip {
    clip_index: u32,
    start_us: i64,
    end_us: i64,
    frames: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    session_id: String,
    domain: Domain,
    recorded_at: Timestamp,
    clips: Vec<RawClip>,
    track: Vec<GeoPose>,
}

impl From<&SessionManifest> for RawManifest {
    fn from(m: &SessionManifest) -> Self {
        RawManifest {
            session_id: m.session_id.clone(),
            domain: m.domain.clone(),
            recorded_at: m.recorded_at,
            clips: m
                .clips
                .iter()
                .map(|c| RawClip {
                    clip_index: c.clip_index,
                    start_us: c.start_time.as_micros(),
                    end_us: c.end_time.as_micros(),
                    frames: c.frame_refs.iter().map(|f| f.0.clone()).collect(),
                })
                .collect(),
            track: m.track.clone(),
        }
    }
}

fn parse_raw(text: &str) -> Result<RawManifest, SessionError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "manifest".to_string() } else { path };
        SessionError::schema(field, e.into_inner().to_string())
    })
}

fn is_plain_relative(rel: &str) -> bool {
    let p = Path::new(rel);
    !rel.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl RawManifest {
    fn violations(&self) -> Vec<SessionError> {
        let mut out = Vec::new();
        if self.session_id.trim().is_empty() {
            out.push(SessionError::schema("session_id", "must be non-empty"));
        }
        let mut seen = HashSet::new();
        for (i, clip) in self.clips.iter().enumerate() {
            if clip.end_us <= clip.start_us {
                out.push(SessionError::schema(
                    format!("clips[{i}].end_us"),
                    "end must be after start",
                ));
            }
            if clip.frames.is_empty() {
                out.push(SessionError::schema(format!("clips[{i}].frames"), "clip has no frames"));
            }
            for (j, f) in clip.frames.iter().enumerate() {
                if !is_plain_relative(f) {
                    out.push(SessionError::schema(
                        format!("clips[{i}].frames[{j}]"),
                        format!("`{f}` is not a relative path inside the session"),
                    ));
                }
            }
            if !seen.insert(clip.clip_index) {
                out.push(SessionError::schema(
                    format!("clips[{i}].clip_index"),
                    format!("duplicate clip index {}", clip.clip_index),
                ));
            }
            if i > 0 {
                let prev = &self.clips[i - 1];
                if clip.start_us < prev.end_us {
                    out.push(SessionError::schema(
                        format!("clips[{i}].start_us"),
                        "clips must be ordered by start time and must not overlap",
                    ));
                }
            }
        }
        for (i, pose) in self.track.iter().enumerate() {
            if !(-90.0..=90.0).contains(&pose.latitude) {
                out.push(SessionError::schema(format!("track[{i}].lat"), "latitude outside [-90, 90]"));
            }
            if !(-180.0..=180.0).contains(&pose.longitude) {
                out.push(SessionError::schema(format!("track[{i}].lon"), "longitude outside [-180, 180]"));
            }
            if i > 0 && pose.timestamp <= self.track[i - 1].timestamp {
                out.push(SessionError::UnsortedTrack { index: i });
            }
        }
        out
    }

    fn into_manifest(self, root: &Path) -> SessionManifest {
        SessionManifest {
            session_id: self.session_id,
            domain: self.domain,
            recorded_at: self.recorded_at,
            clips: self
                .clips
                .into_iter()
                .map(|c| {
                    Clip::new(
                        c.clip_index,
                        Timestamp(c.start_us),
                        Timestamp(c.end_us),
                        c.frames.into_iter().map(FrameRef).collect(),
                    )
                })
                .collect(),
            track: self.track,
            root: root.to_path_buf(),
        }
    }
}

/// Collects every violation in a session directory instead of stopping at
/// the first one.
pub fn validate_session(dir: &Path) -> Vec<SessionError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return vec![SessionError::MissingManifest(dir.to_path_buf())];
    }
    let text = match fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(e) => return vec![SessionError::io(&manifest_path, e)],
    };
    let raw = match parse_raw(&text) {
        Ok(r) => r,
        Err(e) => return vec![e],
    };
    let mut out = raw.violations();
    for clip in &raw.clips {
        for f in &clip.frames {
            if !is_plain_relative(f) {
                continue;
            }
            let p = dir.join(f);
            if !p.is_file() {
                out.push(SessionError::MissingFrame(p));
            }
        }
    }
    out
}

/// Loads and fully validates a session directory.
pub fn load_session(dir: &Path) -> Result<SessionManifest, SessionError> {
    if let Some(first) = validate_session(dir).into_iter().next() {
        return Err(first);
    }
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| SessionError::io(dir, e))?;
    let raw = parse_raw(&text)?;
    Ok(raw.into_manifest(dir))
}

/// Writes `manifest.json`; frames are not copied.
pub fn save_session(manifest: &SessionManifest, dir: &Path) -> Result<(), SessionError> {
    fs::create_dir_all(dir).map_err(|e| SessionError::io(dir, e))?;
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest.to_json()).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| SessionError::io(&path, e))
}

/// Picks frames nearest to a uniform `1/rate_hz` grid that starts at the
/// clip start. Frames are assumed evenly spaced over the clip.
pub fn sample_frames(clip: &Clip, rate_hz: f64) -> Result<Clip, SessionError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SessionError::InvalidRate(rate_hz));
    }
    let n = clip.frame_refs.len();
    if n == 0 {
        return Err(SessionError::EmptyClip(clip.clip_index));
    }
    let duration_s = clip.duration_us() as f64 / 1e6;
    let indices: Vec<usize> = if n == 1 || duration_s <= 0.0 {
        vec![0]
    } else {
        let slots = duration_s * rate_hz;
        let steps = slots.ceil().max(1.0) as usize;
        let mut picked: Vec<usize> = Vec::with_capacity(steps.min(n));
        for k in 0..steps {
            // half-way ties go to the earlier frame
            let idx = (((k as f64 * n as f64 / slots) - 0.5).ceil().max(0.0) as usize).min(n - 1);
            if picked.last() != Some(&idx) {
                picked.push(idx);
            }
        }
        picked
    };
    let mut out = clip.clone();
    out.sampled_frame_refs = indices.into_iter().map(|i| clip.frame_refs[i].clone()).collect();
    Ok(out)
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac
}

/// Heading interpolation along the shorter arc, result in `[0, 360)`.
fn lerp_heading(a: f64, b: f64, frac: f64) -> f64 {
    let delta = (b - a + 540.0).rem_euclid(360.0) - 180.0;
    (a + delta * frac).rem_euclid(360.0)
}

/// Pose at `t`, linear between bracketing samples and clamped outside the
/// track. The returned pose carries timestamp `t`.
pub fn interpolate_pose(track: &[GeoPose], t: Timestamp) -> Result<GeoPose, SessionError> {
    let first = track.first().ok_or(SessionError::EmptyTrack)?;
    let last = track.last().expect("non-empty");
    if t <= first.timestamp {
        return Ok(GeoPose { timestamp: t, ..first.clone() });
    }
    if t >= last.timestamp {
        return Ok(GeoPose { timestamp: t, ..last.clone() });
    }
    let hi = track.partition_point(|p| p.timestamp <= t);
    let (a, b) = (&track[hi - 1], &track[hi]);
    if a.timestamp == t {
        return Ok(a.clone());
    }
    let span = (b.timestamp.as_micros() - a.timestamp.as_micros()) as f64;
    let frac = (t.as_micros() - a.timestamp.as_micros()) as f64 / span;
    Ok(GeoPose {
        timestamp: t,
        latitude: lerp(a.latitude, b.latitude, frac),
        longitude: lerp(a.longitude, b.longitude, frac),
        altitude: match (a.altitude, b.altitude) {
            (Some(x), Some(y)) => Some(lerp(x, y, frac)),
            _ => None,
        },
        heading: match (a.heading, b.heading) {
            (Some(x), Some(y)) => Some(lerp_heading(x, y, frac)),
            _ => None,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionSource {
    Gateway,
    Precomputed,
}

/// One caption for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneDescription {
    pub clip_index: u32,
    pub text: String,
    pub generated_at: Timestamp,
    pub source: DescriptionSource,
    /// Pose at the clip midpoint; `None` when the session has no track.
    pub pose: Option<GeoPose>,
}

impl SceneDescription {
    /// Anchors a caption to its clip; the text is trimmed and must be non-empty.
    pub fn anchored(
        session: &SessionManifest,
        clip_index: u32,
        text: &str,
        generated_at: Timestamp,
        source: DescriptionSource,
    ) -> Result<Self, SessionError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::schema(
                format!("descriptions[clip {clip_index}].text"),
                "description text is empty",
            ));
        }
        let clip = session.clip(clip_index).ok_or_else(|| {
            SessionError::schema(
                format!("descriptions[clip {clip_index}]"),
                "description refers to an unknown clip",
            )
        })?;
        let pose = if session.track.is_empty() {
            None
        } else {
            Some(interpolate_pose(&session.track, clip.midpoint())?)
        };
        Ok(SceneDescription {
            clip_index,
            text: text.to_string(),
            generated_at,
            source,
            pose,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptionLine {
    clip_index: u32,
    text: String,
    generated_at_us: i64,
}

/// Reads `descriptions.jsonl`, one description per clip, returned in clip order.
pub fn load_descriptions(path: &Path, session: &SessionManifest) -> Result<Vec<SceneDescription>, SessionError> {
    let file = fs::File::open(path).map_err(|e| SessionError::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SessionError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DescriptionLine = serde_json::from_str(&line)
            .map_err(|e| SessionError::schema(format!("descriptions.jsonl:{}", lineno + 1), e.to_string()))?;
        if !seen.insert(parsed.clip_index) {
            return Err(SessionError::schema(
                format!("descriptions.jsonl:{}", lineno + 1),
                format!("second description for clip {}", parsed.clip_index),
            ));
        }
        out.push(SceneDescription::anchored(
            session,
            parsed.clip_index,
            &parsed.text,
            Timestamp(parsed.generated_at_us),
            DescriptionSource::Precomputed,
        )?);
    }
    let order: Vec<u32> = session.clips.iter().map(|c| c.clip_index).collect();
    out.sort_by_key(|d| order.iter().position(|&c| c == d.clip_index));
    Ok(out)
}

pub fn save_descriptions(path: &Path, descriptions: &[SceneDescription]) -> Result<(), SessionError> {
    let mut buf = Vec::new();
    for d in descriptions {
        let line = DescriptionLine {
            clip_index: d.clip_index,
            text: d.text.clone(),
            generated_at_us: d.generated_at.as_micros(),
        };
        serde_json::to_writer(&mut buf, &line).expect("description serializes");
        buf.write_all(b"\n").expect("vec write");
    }
    fs::write(path, buf).map_err(|e| SessionError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn clip_with_frames(n: usize, duration_us: i64) -> Clip {
        let frames = (0..n).map(|i| FrameRef(format!("frames/{i:04}.png"))).collect();
        Clip::new(0, Timestamp(0), Timestamp(duration_us), frames)
    }

    fn sampled_indices(clip: &Clip) -> Vec<usize> {
        clip.sampled_frame_refs
            .iter()
            .map(|f| clip.frame_refs.iter().position(|g| g == f).unwrap())
            .collect()
    }

    /// Independent uniform-grid oracle: for each grid instant, scan all
    /// frames for the one whose timestamp is closest.
    fn grid_oracle(n: usize, duration_s: f64, rate: f64) -> Vec<usize> {
        let dt = duration_s / n as f64;
        let mut out: Vec<usize> = Vec::new();
        let mut k = 0;
        loop {
            let t = k as f64 / rate;
            if t >= duration_s - 1e-12 {
                break;
            }
            let mut best = 0;
            for i in 1..n {
                let d_best = (best as f64 * dt - t).abs();
                let d_i = (i as f64 * dt - t).abs();
                if d_i < d_best - 1e-9 {
                    best = i;
                }
            }
            if out.last() != Some(&best) {
                out.push(best);
            }
            k += 1;
        }
        out
    }

    #[test]
    fn one_hz_over_twenty_five_fps() {
        let clip = clip_with_frames(125, 5_000_000);
        let s = sample_frames(&clip, 1.0).unwrap();
        assert_eq!(sampled_indices(&s), vec![0, 25, 50, 75, 100]);
        assert_eq!(grid_oracle(125, 5.0, 1.0), vec![0, 25, 50, 75, 100]);
    }

    #[test]
    fn saturates_at_native_rate() {
        let clip = clip_with_frames(125, 5_000_000);
        for rate in [25.0, 30.0, 100.0] {
            let s = sample_frames(&clip, rate).unwrap();
            assert_eq!(s.sampled_frame_refs, clip.frame_refs, "rate {rate}");
        }
    }

    #[test]
    fn single_frame_clip() {
        let clip = clip_with_frames(1, 5_000_000);
        for rate in [0.1, 1.0, 50.0] {
            assert_eq!(sample_frames(&clip, rate).unwrap().sampled_frame_refs.len(), 1);
        }
    }

    #[test]
    fn empty_clip_and_bad_rate() {
        let clip = clip_with_frames(0, 5_000_000);
        assert_eq!(sample_frames(&clip, 1.0), Err(SessionError::EmptyClip(0)));
        let clip = clip_with_frames(3, 5_000_000);
        assert!(matches!(sample_frames(&clip, 0.0), Err(SessionError::InvalidRate(_))));
        assert!(matches!(sample_frames(&clip, f64::NAN), Err(SessionError::InvalidRate(_))));
    }

    #[test]
    fn sampling_matches_grid_oracle() {
        for n in [2usize, 7, 10, 24, 60, 125] {
            for rate in [0.3, 0.5, 1.0, 2.0, 3.0] {
                let clip = clip_with_frames(n, 5_000_000);
                let got = sampled_indices(&sample_frames(&clip, rate).unwrap());
                assert_eq!(got, grid_oracle(n, 5.0, rate), "n={n} rate={rate}");
            }
        }
    }

    fn pose(t: i64, lat: f64, lon: f64, heading: Option<f64>) -> GeoPose {
        GeoPose {
            timestamp: Timestamp(t),
            latitude: lat,
            longitude: lon,
            altitude: Some(100.0),
            heading,
        }
    }

    #[test]
    fn pose_identity_on_samples() {
        let track = vec![pose(0, 49.75, 6.63, Some(10.0)), pose(10, 49.7502, 6.6304, Some(20.0))];
        assert_eq!(interpolate_pose(&track, Timestamp(0)).unwrap(), track[0]);
        assert_eq!(interpolate_pose(&track, Timestamp(10)).unwrap(), track[1]);
    }

    #[test]
    fn pose_linear_midpoint() {
        let track = vec![pose(0, 49.7500, 6.6300, None), pose(10, 49.7502, 6.6304, None)];
        let p = interpolate_pose(&track, Timestamp(5)).unwrap();
        assert_abs_diff_eq!(p.latitude, 49.7501, epsilon = 1e-12);
        assert_abs_diff_eq!(p.longitude, 6.6302, epsilon = 1e-12);
        assert_eq!(p.altitude, Some(100.0));
        assert_eq!(p.heading, None);
    }

    #[test]
    fn heading_takes_short_arc() {
        let track = vec![pose(0, 0.0, 0.0, Some(350.0)), pose(10, 0.0, 0.0, Some(10.0))];
        let h = interpolate_pose(&track, Timestamp(5)).unwrap().heading.unwrap();
        // circular mean of the two bearings as unit vectors
        let (s, c) = [350.0f64, 10.0]
            .iter()
            .fold((0.0, 0.0), |(s, c), d| (s + d.to_radians().sin(), c + d.to_radians().cos()));
        let oracle = s.atan2(c).to_degrees().rem_euclid(360.0);
        let diff = (h - oracle + 540.0).rem_euclid(360.0) - 180.0;
        assert!(diff.abs() < 1e-9, "h={h} oracle={oracle}");
        assert!(h.min(360.0 - h) < 1e-9);
    }

    #[test]
    fn pose_clamps_and_rejects_empty() {
        let track = vec![pose(10, 1.0, 2.0, None), pose(20, 3.0, 4.0, None)];
        let before = interpolate_pose(&track, Timestamp(0)).unwrap();
        assert_eq!((before.latitude, before.longitude, before.timestamp), (1.0, 2.0, Timestamp(0)));
        let after = interpolate_pose(&track, Timestamp(99)).unwrap();
        assert_eq!((after.latitude, after.longitude), (3.0, 4.0));
        assert_eq!(interpolate_pose(&[], Timestamp(0)), Err(SessionError::EmptyTrack));
    }

    #[test]
    fn domain_parsing() {
        assert_eq!(Domain::parse("campus_indoor"), Domain::CampusIndoor);
        assert_eq!(Domain::parse("Campus Outdoor"), Domain::CampusOutdoor);
        assert_eq!(Domain::parse("CITY"), Domain::City);
        assert_eq!(Domain::parse("harbour"), Domain::Other("harbour".into()));
    }

    fn manifest_json(clips: &str, track: &str) -> String {
        format!(
            r#"{{"session_id":"s","domain":"city","recorded_at":0,"clips":{clips},"track":{track}}}"#
        )
    }

    #[test]
    fn out_of_order_clips_are_a_schema_violation() {
        let text = manifest_json(
            r#"[{"clip_index":0,"start_us":5000000,"end_us":10000000,"frames":["a.png"]},
                {"clip_index":1,"start_us":0,"end_us":5000000,"frames":["b.png"]}]"#,
            "[]",
        );
        let err = SessionManifest::from_json_str(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, SessionError::SchemaViolation { ref field, .. } if field == "clips[1].start_us"), "{err}");
    }

    #[test]
    fn empty_clip_list_is_valid() {
        let m = SessionManifest::from_json_str(&manifest_json("[]", "[]"), Path::new(".")).unwrap();
        assert!(m.clips.is_empty());
    }

    #[test]
    fn unsorted_track_and_bad_coordinates() {
        let text = manifest_json("[]", r#"[{"t_us":5,"lat":1,"lon":1},{"t_us":5,"lat":1,"lon":1}]"#);
        assert_eq!(
            SessionManifest::from_json_str(&text, Path::new(".")).unwrap_err(),
            SessionError::UnsortedTrack { index: 1 }
        );
        let text = manifest_json("[]", r#"[{"t_us":5,"lat":91,"lon":1}]"#);
        assert!(matches!(
            SessionManifest::from_json_str(&text, Path::new(".")).unwrap_err(),
            SessionError::SchemaViolation { field, .. } if field == "track[0].lat"
        ));
    }

    #[test]
    fn missing_field_names_the_path() {
        let text = r#"{"session_id":"s","domain":"city","recorded_at":0,"clips":[{"clip_index":0,"start_us":0,"frames":[]}],"track":[]}"#;
        let err = SessionManifest::from_json_str(text, Path::new(".")).unwrap_err();
        match err {
            SessionError::SchemaViolation { field, detail } => {
                assert_eq!(field, "clips[0]");
                assert!(detail.contains("end_us"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn escaping_frame_paths_rejected() {
        let text = manifest_json(
            r#"[{"clip_index":0,"start_us":0,"end_us":5,"frames":["../x.png"]}]"#,
            "[]",
        );
        assert!(matches!(
            SessionManifest::from_json_str(&text, Path::new(".")).unwrap_err(),
            SessionError::SchemaViolation { field, .. } if field == "clips[0].frames[0]"
        ));
    }
}
