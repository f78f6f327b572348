//! Pipeline configuration: a JSON file with defaults for every field.
//! Unknown keys are rejected so typos surface instead of being ignored.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clustering::ClusterParams;
use crate::prompts::DEFAULT_PROMPT_CAP;
use crate::session::{DEFAULT_CLIP_LENGTH_S, DEFAULT_SAMPLING_RATE_HZ};
use crate::tuning::{GridSpec, SplitSpec};

pub const GATEWAY_URL_ENV: &str = "FIELDSCRIBE_GATEWAY_URL";
pub const DEFAULT_GATEWAY_URL: &str = "http://127.0.0.1:8765";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config field `{field}`: {detail}")]
    Invalid { field: String, detail: String },
}

impl ConfigError {
    fn invalid(field: &str, detail: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    pub base_url: String,
    /// Per-request timeout in milliseconds.
    pub timeout_ms: u64,
    pub max_concurrent_requests: usize,
    /// Most frames sent in one caption request.
    pub max_caption_frames: usize,
    pub caption_model: String,
    pub text_embed_model: String,
    pub joint_embed_model: String,
    pub detect_model: String,
    pub segment_model: String,
    pub pos_model: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_GATEWAY_URL.into(),
            timeout_ms: 120_000,
            max_concurrent_requests: 4,
            max_caption_frames: 16,
            caption_model: "smolvlm2-2.2b-instruct".into(),
            text_embed_model: "all-MiniLM-L6-v2".into(),
            joint_embed_model: "clip-vit-b-32".into(),
            detect_model: "grounding-dino-tiny".into(),
            segment_model: "sam-vit-b".into(),
            pos_model: "en_core_web_sm".into(),
        }
    }
}

impl GatewayConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_concurrent_requests == 0 {
            return Err(ConfigError::invalid("gateway.max_concurrent_requests", "must be at least 1"));
        }
        if self.max_caption_frames == 0 {
            return Err(ConfigError::invalid("gateway.max_caption_frames", "must be at least 1"));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(ConfigError::invalid("gateway.base_url", format!("not an http(s) URL: {}", self.base_url)));
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::invalid("gateway.timeout_ms", "must be positive"));
        }
        Ok(())
    }

    /// Applies `FIELDSCRIBE_GATEWAY_URL` if set and non-empty.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(GATEWAY_URL_ENV) {
            if !url.trim().is_empty() {
                self.base_url = url.trim().to_string();
            }
        }
    }
}

/// Fixed clustering parameters, or `"auto"` to run the tuner first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClusteringChoice {
    Auto,
    Fixed(ClusterParams),
}

impl Default for ClusteringChoice {
    fn default() -> Self {
        Self::Fixed(ClusterParams::default())
    }
}

impl Serialize for ClusteringChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Fixed(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ClusteringChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            Params(ClusterParams),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "auto" => Ok(Self::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("expected \"auto\" or an object, got \"{w}\""))),
            Repr::Params(p) => Ok(Self::Fixed(p)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NounSource {
    Heuristic,
    GatewayPos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Md,
    Html,
    Tex,
}

impl ReportFormat {
    /// Parses a comma-separated list such as `md,html,tex`.
    pub fn parse_list(raw: &str) -> Result<Vec<Self>, ConfigError> {
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let f = match part.to_ascii_lowercase().as_str() {
                "md" | "markdown" => Self::Md,
                "html" => Self::Html,
                "tex" | "latex" => Self::Tex,
                other => return Err(ConfigError::invalid("report.formats", format!("unknown format `{other}`"))),
            };
            if !out.contains(&f) {
                out.push(f);
            }
        }
        if out.is_empty() {
            return Err(ConfigError::invalid("report.formats", "no format given"));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub formats: Vec<ReportFormat>,
    /// Inline images as `data:` URIs in HTML.
    pub embed_assets: bool,
    /// Lets the HTML viewer fetch map tiles from `tile_url`.
    pub allow_tiles: bool,
    pub tile_url: String,
    pub title: Option<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            formats: vec![ReportFormat::Md],
            embed_assets: true,
            allow_tiles: false,
            tile_url: "https://tile.openstreetmap.org/{z}/{x}/{y}.png".into(),
            title: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub gateway: GatewayConfig,
    pub clip_length_s: f64,
    pub sampling_rate_hz: f64,
    pub clustering: ClusteringChoice,
    /// Embedding space to cluster in; defaults to `gateway.text_embed_model`.
    pub cluster_space: Option<String>,
    pub split: SplitSpec,
    pub grid: GridSpec,
    pub seed: u64,
    pub report: ReportConfig,
    pub anonymize: bool,
    pub noun_source: NounSource,
    pub prompt_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gateway: GatewayConfig::default(),
            clip_length_s: DEFAULT_CLIP_LENGTH_S,
            sampling_rate_hz: DEFAULT_SAMPLING_RATE_HZ,
            clustering: ClusteringChoice::default(),
            cluster_space: None,
            split: SplitSpec::default(),
            grid: GridSpec::with_spaces(Vec::new()),
            seed: 42,
            report: ReportConfig::default(),
            anonymize: true,
            noun_source: NounSource::Heuristic,
            prompt_cap: DEFAULT_PROMPT_CAP,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Invalid {
            field: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn cluster_space(&self) -> &str {
        self.cluster_space.as_deref().unwrap_or(&self.gateway.text_embed_model)
    }

    /// The grid with an empty space list replaced by the clustering space.
    pub fn resolved_grid(&self) -> GridSpec {
        let mut g = self.grid.clone();
        if g.embed_spaces.is_empty() {
            g.embed_spaces.push(self.cluster_space().to_string());
        }
        g
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gateway.validate()?;
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(ConfigError::invalid("sampling_rate_hz", "must be positive"));
        }
        if !(self.clip_length_s.is_finite() && self.clip_length_s > 0.0) {
            return Err(ConfigError::invalid("clip_length_s", "must be positive"));
        }
        if let ClusteringChoice::Fixed(p) = &self.clustering {
            p.validate().map_err(|e| ConfigError::invalid("clustering", e.to_string()))?;
        }
        if !(self.split.tuning_fraction > 0.0 && self.split.tuning_fraction < 1.0) {
            return Err(ConfigError::invalid("split.tuning_fraction", "must lie in (0, 1)"));
        }
        self.resolved_grid()
            .validate()
            .map_err(|e| ConfigError::invalid("grid", e.to_string()))?;
        if self.report.formats.is_empty() {
            return Err(ConfigError::invalid("report.formats", "no format given"));
        }
        if self.prompt_cap == 0 {
            return Err(ConfigError::invalid("prompt_cap", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{Linkage, Metric};

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = PipelineConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.cluster_space(), "all-MiniLM-L6-v2");
        assert_eq!(cfg.resolved_grid().size(), 114);
    }

    #[test]
    fn auto_and_fixed_clustering() {
        let cfg = PipelineConfig::from_json_str(r#"{"clustering":"auto"}"#).unwrap();
        assert_eq!(cfg.clustering, ClusteringChoice::Auto);
        let cfg = PipelineConfig::from_json_str(r#"{"clustering":{"metric":"euclidean","threshold":0.7,"linkage":"single"}}"#)
            .unwrap();
        assert_eq!(
            cfg.clustering,
            ClusteringChoice::Fixed(ClusterParams {
                metric: Metric::Euclidean,
                threshold: 0.7,
                linkage: Linkage::Single
            })
        );
        assert!(PipelineConfig::from_json_str(r#"{"clustering":"manual"}"#).is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_field() {
        match PipelineConfig::from_json_str(r#"{"gateway":{"base_ulr":"x"}}"#).unwrap_err() {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "gateway.base_ulr"),
            e => panic!("{e}"),
        }
        match PipelineConfig::from_json_str(r#"{"gateway":{"max_concurrent_requests":0}}"#).unwrap_err() {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "gateway.max_concurrent_requests"),
            e => panic!("{e}"),
        }
        assert!(PipelineConfig::from_json_str(r#"{"sampling_rate_hz":0}"#).is_err());
    }

    #[test]
    fn format_lists() {
        assert_eq!(
            ReportFormat::parse_list("md,html,tex").unwrap(),
            [ReportFormat::Md, ReportFormat::Html, ReportFormat::Tex]
        );
        assert_eq!(ReportFormat::parse_list("html, md,html").unwrap(), [ReportFormat::Html, ReportFormat::Md]);
        assert!(ReportFormat::parse_list("pdf").is_err());
        assert!(ReportFormat::parse_list("").is_err());
    }

    #[test]
    fn round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.clustering = ClusteringChoice::Auto;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json_str(&text).unwrap(), cfg);
    }
}
