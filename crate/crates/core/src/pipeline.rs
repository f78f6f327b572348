//! Stage driver: sample, caption, embed, cluster, pick representatives,
//! prompt the detector, anonymize and emit reports.
//!
//! Every stage is a method on [`Pipeline`] so the CLI can run them one at a
//! time; [`Pipeline::run`] chains them and writes the full output tree.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    self, select_representative, ClusterError, ClusterParams, ClusterSummary, ClustersFile, ClustersFileParams,
    Partition, RepresentativeRecord,
};
use crate::config::{ClusteringChoice, NounSource, PipelineConfig};
use crate::embedding::EmbeddingVector;
use crate::gateway::{fan_out, GatewayClient, GatewayError, MockBackend, MockTransport, MOCK_SEED};
use crate::metrics::{self, GroundTruthError, GroundTruthLabeling, MetricsError, MetricsRecord};
use crate::palette::cluster_color;
use crate::prompts::{ExtractionMode, NounExtractor, PromptError};
use crate::report::{self, build_report_model, ClusterVisual, RenderTarget, ReportError, ReportInputs};
use crate::session::{
    self, load_descriptions, load_session, sample_frames, save_descriptions, DescriptionSource, SceneDescription,
    SessionError, SessionManifest, DESCRIPTIONS_FILE, GROUND_TRUTH_FILE,
};
use crate::tuning::{self, grid_search, grid_tsv, DescriptionKey, GridOutcome, GridSpec, TuningError, TuningGroup};

pub const EMBEDDINGS_FILE: &str = "embeddings.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const LOG_FILE: &str = "pipeline.log";
pub const METRICS_FILE: &str = "metrics.json";
pub const GRID_FILE: &str = "grid_results.tsv";
pub const BEST_PARAMS_FILE: &str = "best_params.json";
pub const REPORT_DIR: &str = "report";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Describe,
    Embed,
    Tune,
    Cluster,
    Representatives,
    Nouns,
    Detect,
    Anonymize,
    Evaluate,
    Report,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Describe => "describe",
            Stage::Embed => "embed",
            Stage::Tune => "tune",
            Stage::Cluster => "cluster",
            Stage::Representatives => "representatives",
            Stage::Nouns => "nouns",
            Stage::Detect => "detect",
            Stage::Anonymize => "anonymize",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Session { stage: Stage, source: SessionError },
    #[error("{stage}: {source}")]
    Gateway { stage: Stage, source: GatewayError },
    #[error("{stage}: {source}")]
    Cluster { stage: Stage, source: ClusterError },
    #[error("{stage}: {source}")]
    Prompt { stage: Stage, source: PromptError },
    #[error("{stage}: {source}")]
    Tuning { stage: Stage, source: TuningError },
    #[error("{stage}: {source}")]
    Metrics { stage: Stage, source: MetricsError },
    #[error("{stage}: {source}")]
    GroundTruth { stage: Stage, source: GroundTruthError },
    #[error("{stage}: {source}")]
    Report { stage: Stage, source: ReportError },
    #[error("{stage}: {detail}")]
    Data { stage: Stage, detail: String },
    #[error("{stage}: i/o error on {path}: {message}")]
    Io { stage: Stage, path: PathBuf, message: String },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Session { stage, .. }
            | PipelineError::Gateway { stage, .. }
            | PipelineError::Cluster { stage, .. }
            | PipelineError::Prompt { stage, .. }
            | PipelineError::Tuning { stage, .. }
            | PipelineError::Metrics { stage, .. }
            | PipelineError::GroundTruth { stage, .. }
            | PipelineError::Report { stage, .. }
            | PipelineError::Data { stage, .. }
            | PipelineError::Io { stage, .. } => *stage,
        }
    }

    fn io(stage: Stage, path: &Path, err: impl fmt::Display) -> Self {
        PipelineError::Io {
            stage,
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// Attaches a stage name to a lower-level error.
trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

macro_rules! at_stage {
    ($err:ty, $variant:ident) => {
        impl<T> AtStage<T> for Result<T, $err> {
            fn at(self, stage: Stage) -> Result<T, PipelineError> {
                self.map_err(|source| PipelineError::$variant { stage, source })
            }
        }
    };
}

at_stage!(SessionError, Session);
at_stage!(GatewayError, Gateway);
at_stage!(ClusterError, Cluster);
at_stage!(PromptError, Prompt);
at_stage!(TuningError, Tuning);
at_stage!(MetricsError, Metrics);
at_stage!(GroundTruthError, GroundTruth);
at_stage!(ReportError, Report);

/// `embeddings.json`: one vector per description, in description order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsFile {
    pub space_id: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingsFile {
    pub fn from_vectors(space_id: &str, vectors: &[EmbeddingVector]) -> Self {
        Self {
            space_id: space_id.to_string(),
            dim: vectors.first().map_or(0, EmbeddingVector::dim),
            vectors: vectors.iter().map(|v| v.values().to_vec()).collect(),
        }
    }

    pub fn to_vectors(&self) -> Result<Vec<EmbeddingVector>, String> {
        self.vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() != self.dim {
                    return Err(format!("vectors[{i}] has dim {} instead of {}", v.len(), self.dim));
                }
                EmbeddingVector::normalized(self.space_id.clone(), v.clone()).map_err(|e| format!("vectors[{i}]: {e}"))
            })
            .collect()
    }
}

/// Gateway client backed by the in-process mock, with every session root
/// registered so fixture annotations are found.
pub fn mock_gateway(config: &PipelineConfig, roots: &[&Path]) -> Result<GatewayClient, GatewayError> {
    let mut backend = MockBackend::new(MOCK_SEED);
    for root in roots {
        backend.register_root(root)?;
    }
    GatewayClient::new(config.gateway.clone(), Arc::new(MockTransport::new(Arc::new(backend))))
}

/// One line per finished stage, flushed to `pipeline.log`.
#[derive(Default)]
pub struct StageLog {
    lines: Mutex<Vec<String>>,
}

impl StageLog {
    pub fn note(&self, stage: Stage, message: impl Into<String>) {
        let message = message.into();
        log::info!("[{stage}] {message}");
        self.lines
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(format!("{stage}\t-\t{message}"));
    }

    fn timed(&self, stage: Stage, started: Instant, message: String) {
        let ms = started.elapsed().as_secs_f64() * 1e3;
        log::info!("[{stage}] {message} ({ms:.1} ms)");
        self.lines
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(format!("{stage}\t{ms:.1} ms\t{message}"));
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = String::from("stage\telapsed\tdetail\n");
        for l in self.lines() {
            text.push_str(&l);
            text.push('\n');
        }
        fs::write(path, text)
    }
}

/// A session with its descriptions and, when present, its ground truth.
#[derive(Clone, Debug)]
pub struct SessionData {
    pub session: SessionManifest,
    pub descriptions: Vec<SceneDescription>,
    pub truth: Option<GroundTruthLabeling>,
}

/// Outcome of the clustering stage.
#[derive(Clone, Debug)]
pub struct Clustered {
    pub space: String,
    pub params: ClusterParams,
    pub partition: Partition,
    pub embeddings: Vec<EmbeddingVector>,
    pub tuning: Option<GridOutcome>,
}

/// What [`Pipeline::run`] produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub descriptions: usize,
    pub clusters: usize,
    pub metrics: Option<MetricsRecord>,
    pub written: Vec<PathBuf>,
}

pub struct Pipeline {
    config: PipelineConfig,
    gateway: GatewayClient,
    log: StageLog,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, gateway: GatewayClient) -> Self {
        Self {
            config,
            gateway,
            log: StageLog::default(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &GatewayClient {
        &self.gateway
    }

    pub fn log(&self) -> &StageLog {
        &self.log
    }

    fn workers(&self) -> usize {
        self.config.gateway.max_concurrent_requests
    }

    /// Loads a session and samples every clip at the configured rate.
    pub fn ingest(&self, dir: &Path) -> Result<SessionManifest, PipelineError> {
        let t = Instant::now();
        let mut s = load_session(dir).at(Stage::Ingest)?;
        for clip in &mut s.clips {
            *clip = sample_frames(clip, self.config.sampling_rate_hz).at(Stage::Ingest)?;
        }
        let frames: usize = s.clips.iter().map(|c| c.sampled_frame_refs.len()).sum();
        self.log.timed(
            Stage::Ingest,
            t,
            format!("{}: {} clips, {frames} sampled frames", s.session_id, s.clips.len()),
        );
        Ok(s)
    }

    /// Captions every clip through the gateway, in clip order.
    pub fn describe(&self, session: &SessionManifest) -> Result<Vec<SceneDescription>, PipelineError> {
        let t = Instant::now();
        let out = fan_out(&session.clips, self.workers(), |clip| {
            let frames: Vec<PathBuf> = clip.sampled_frame_refs.iter().map(|f| session.frame_path(f)).collect();
            let text = self.gateway.caption(&frames).at(Stage::Describe)?;
            // Captions are produced once the clip has been recorded.
            SceneDescription::anchored(session, clip.clip_index, &text, clip.end_time, DescriptionSource::Gateway)
                .at(Stage::Describe)
        })?;
        self.log.timed(Stage::Describe, t, format!("{} clips captioned", out.len()));
        Ok(out)
    }

    /// Precomputed `descriptions.jsonl` from the session directory when
    /// present, otherwise fresh captions.
    pub fn descriptions_for(&self, session: &SessionManifest) -> Result<Vec<SceneDescription>, PipelineError> {
        let path = session.root.join(DESCRIPTIONS_FILE);
        if path.is_file() {
            let d = load_descriptions(&path, session).at(Stage::Describe)?;
            self.log
                .note(Stage::Describe, format!("using {} precomputed descriptions", d.len()));
            return Ok(d);
        }
        self.describe(session)
    }

    pub fn embed(&self, descriptions: &[SceneDescription], space: &str) -> Result<Vec<EmbeddingVector>, PipelineError> {
        let t = Instant::now();
        let texts: Vec<String> = descriptions.iter().map(|d| d.text.clone()).collect();
        let v = self.gateway.embed_texts(&texts, space).at(Stage::Embed)?;
        self.log.timed(
            Stage::Embed,
            t,
            format!("{} descriptions in {space} (dim {})", v.len(), v.first().map_or(0, |e| e.dim())),
        );
        Ok(v)
    }

    /// Ground truth from `ground_truth.json` next to the manifest, if any.
    pub fn ground_truth_for(&self, session: &SessionManifest, n: usize) -> Result<Option<GroundTruthLabeling>, PipelineError> {
        let path = session.root.join(GROUND_TRUTH_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(Stage::Evaluate, &path, e))?;
        let gt = GroundTruthLabeling::parse(&text).at(Stage::Evaluate)?;
        gt.check_len(n).at(Stage::Evaluate)?;
        Ok(Some(gt))
    }

    pub fn load(&self, dir: &Path) -> Result<SessionData, PipelineError> {
        let session = self.ingest(dir)?;
        let descriptions = self.descriptions_for(&session)?;
        let truth = self.ground_truth_for(&session, descriptions.len())?;
        Ok(SessionData {
            session,
            descriptions,
            truth,
        })
    }

    /// Grid search on the chronological tuning split of `data`.
    pub fn tune(&self, data: &[SessionData], grid: &GridSpec) -> Result<GridOutcome, PipelineError> {
        let t = Instant::now();
        grid.validate().at(Stage::Tune)?;
        let sessions: Vec<SessionManifest> = data.iter().map(|d| d.session.clone()).collect();
        let split = tuning::split(&sessions, &self.config.split).at(Stage::Tune)?;
        let mut groups = Vec::new();
        for d in data {
            let truth = d.truth.as_ref().ok_or(TuningError::MissingGroundTruth).at(Stage::Tune)?;
            let idx = subset(d, |k| split.is_tuning(k));
            groups.push(self.group(d, truth, &idx, &grid.embed_spaces)?);
        }
        let outcome = grid_search(&groups, grid).at(Stage::Tune)?;
        let b = &outcome.best;
        self.log.timed(
            Stage::Tune,
            t,
            format!(
                "{} trials on {} tuning descriptions; best {} {} {} {} (ARI {:.6}, k {})",
                outcome.trials.len(),
                split.tuning.len(),
                b.params.space,
                b.params.metric,
                b.params.linkage,
                b.params.threshold,
                b.ari,
                b.k
            ),
        );
        Ok(outcome)
    }

    fn group(
        &self,
        d: &SessionData,
        truth: &GroundTruthLabeling,
        idx: &[usize],
        spaces: &[String],
    ) -> Result<TuningGroup, PipelineError> {
        let picked: Vec<SceneDescription> = idx.iter().map(|&i| d.descriptions[i].clone()).collect();
        let mut embeddings = HashMap::new();
        for space in spaces {
            embeddings.insert(space.clone(), self.embed(&picked, space)?);
        }
        let labels = Partition::from_labels(idx.iter().map(|&i| truth.labels.labels()[i]))
            .map_err(|e| PipelineError::Data {
                stage: Stage::Tune,
                detail: e.to_string(),
            })?;
        Ok(TuningGroup {
            name: d.session.session_id.clone(),
            truth: labels,
            embeddings,
        })
    }

    /// Clusters one session, tuning first when the config says `auto`.
    pub fn cluster(&self, data: &SessionData) -> Result<Clustered, PipelineError> {
        let (space, params, tuning) = match self.config.clustering {
            ClusteringChoice::Fixed(p) => (self.config.cluster_space().to_string(), p, None),
            ClusteringChoice::Auto => {
                let outcome = self.tune(std::slice::from_ref(data), &self.config.resolved_grid())?;
                let best = outcome.best.params.clone();
                (best.space.clone(), best.cluster_params(), Some(outcome))
            }
        };
        let embeddings = self.embed(&data.descriptions, &space)?;
        let t = Instant::now();
        let partition = clustering::cluster(&embeddings, &params).at(Stage::Cluster)?;
        self.log.timed(
            Stage::Cluster,
            t,
            format!(
                "{} descriptions into {} clusters ({} {} {})",
                partition.len(),
                partition.k(),
                params.metric,
                params.linkage,
                params.threshold
            ),
        );
        Ok(Clustered {
            space,
            params,
            partition,
            embeddings,
            tuning,
        })
    }

    /// Picks a random member per cluster and its best-matching frame.
    pub fn representatives(
        &self,
        session: &SessionManifest,
        descriptions: &[SceneDescription],
        partition: &Partition,
    ) -> Result<Vec<ClusterSummary>, PipelineError> {
        let t = Instant::now();
        let clusters: Vec<(usize, Vec<usize>)> = partition.clusters().into_iter().enumerate().collect();
        let out = fan_out(&clusters, self.workers(), |(id, members)| {
            let rep = select_representative(members, self.config.seed, *id).at(Stage::Representatives)?;
            let d = &descriptions[rep];
            let clip = session.clip(d.clip_index).ok_or_else(|| PipelineError::Data {
                stage: Stage::Representatives,
                detail: format!("unknown clip {}", d.clip_index),
            })?;
            let paths: Vec<PathBuf> = clip.sampled_frame_refs.iter().map(|f| session.frame_path(f)).collect();
            let (best, _) = self.gateway.best_frame(&d.text, &paths).at(Stage::Representatives)?;
            Ok(ClusterSummary {
                cluster_id: *id,
                member_indices: members.clone(),
                representative_index: rep,
                representative_frame: clip.sampled_frame_refs[best].clone(),
                color: cluster_color(*id),
            })
        })?;
        self.log
            .timed(Stage::Representatives, t, format!("{} representatives", out.len()));
        Ok(out)
    }

    /// Prompts, detections with masks, and redaction boxes per cluster.
    pub fn visuals(
        &self,
        session: &SessionManifest,
        descriptions: &[SceneDescription],
        summaries: &[ClusterSummary],
    ) -> Result<BTreeMap<usize, ClusterVisual>, PipelineError> {
        let t = Instant::now();
        let extractor = NounExtractor::new(self.config.prompt_cap);
        let mut prompts = Vec::with_capacity(summaries.len());
        for s in summaries {
            let text = &descriptions[s.representative_index].text;
            let mode = match self.config.noun_source {
                NounSource::Heuristic => ExtractionMode::Heuristic,
                NounSource::GatewayPos => ExtractionMode::GatewayPos(&self.gateway),
            };
            match extractor.extract(text, mode) {
                Ok(p) => prompts.push(p.nouns().to_vec()),
                Err(PromptError::EmptyPromptSet) => prompts.push(Vec::new()),
                Err(e) => return Err(e).at(Stage::Nouns),
            }
        }
        let total: usize = prompts.iter().map(Vec::len).sum();
        self.log.timed(Stage::Nouns, t, format!("{total} prompts"));

        let t = Instant::now();
        let jobs: Vec<(&ClusterSummary, &Vec<String>)> = summaries.iter().zip(&prompts).collect();
        let detections = fan_out(&jobs, self.workers(), |(s, p)| {
            if p.is_empty() {
                return Ok(Vec::new());
            }
            let frame = session.frame_path(&s.representative_frame);
            let mut dets = self.gateway.detect(&frame, p).at(Stage::Detect)?;
            if !dets.is_empty() {
                let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
                let masks = self.gateway.segment(&frame, &boxes).at(Stage::Detect)?;
                for (d, m) in dets.iter_mut().zip(masks) {
                    d.mask = Some(m);
                }
            }
            Ok(dets)
        })?;
        let n_det: usize = detections.iter().map(Vec::len).sum();
        self.log.timed(Stage::Detect, t, format!("{n_det} detections"));

        let t = Instant::now();
        let redactions = if self.config.anonymize {
            let r = fan_out(summaries, self.workers(), |s| {
                self.gateway
                    .anonymize(&session.frame_path(&s.representative_frame))
                    .at(Stage::Anonymize)
            })?;
            let n: usize = r.iter().map(Vec::len).sum();
            self.log.timed(Stage::Anonymize, t, format!("{n} regions redacted"));
            r
        } else {
            self.log
                .note(Stage::Anonymize, "skipped: anonymization disabled, images are published unredacted");
            vec![Vec::new(); summaries.len()]
        };

        Ok(summaries
            .iter()
            .zip(prompts)
            .zip(detections)
            .zip(redactions)
            .map(|(((s, prompts), detections), redactions)| {
                (
                    s.cluster_id,
                    ClusterVisual {
                        prompts,
                        detections,
                        redactions,
                    },
                )
            })
            .collect())
    }

    /// Scores the clustering parameters on the evaluation split. Falls
    /// back to all descriptions when the session is too small to split.
    pub fn evaluate(&self, data: &SessionData, space: &str, params: &ClusterParams) -> Result<Option<MetricsRecord>, PipelineError> {
        let Some(truth) = &data.truth else {
            self.log.note(Stage::Evaluate, "no ground truth, metrics skipped");
            return Ok(None);
        };
        let t = Instant::now();
        let idx = match tuning::split(std::slice::from_ref(&data.session), &self.config.split) {
            Ok(split) => subset(data, |k| !split.is_tuning(k)),
            Err(TuningError::InsufficientData { .. }) => {
                self.log
                    .note(Stage::Evaluate, "too few descriptions to split, scoring all of them");
                (0..data.descriptions.len()).collect()
            }
            Err(e) => return Err(e).at(Stage::Evaluate),
        };
        let group = self.group(data, truth, &idx, &[space.to_string()])?;
        let (scores, k) = tuning::evaluate_params(std::slice::from_ref(&group), space, params).at(Stage::Evaluate)?;
        let record = MetricsRecord::new(
            data.session.domain.as_key(),
            idx.len(),
            scores,
            params_json(space, params),
        );
        self.log.timed(
            Stage::Evaluate,
            t,
            format!(
                "n {} k {k}: ARI {:.6} NMI {:.6} FMI {:.6}",
                record.n, record.ari, record.nmi_arithmetic, record.fmi
            ),
        );
        Ok(Some(record))
    }

    /// Builds the report model and writes every configured format.
    pub fn report(
        &self,
        data: &SessionData,
        clustered: &ClusteredView<'_>,
        summaries: &[ClusterSummary],
        visuals: BTreeMap<usize, ClusterVisual>,
        metrics: Option<&MetricsRecord>,
        out_dir: &Path,
    ) -> Result<Vec<PathBuf>, PipelineError> {
        let t = Instant::now();
        let model = build_report_model(ReportInputs {
            session: &data.session,
            descriptions: &data.descriptions,
            partition: clustered.partition,
            summaries,
            visuals,
            metrics: metrics.cloned().into_iter().collect(),
            clustering: describe_params(clustered.space, clustered.params),
            title: self.config.report.title.clone(),
        })
        .at(Stage::Report)?;
        let tile_url = self.config.report.allow_tiles.then(|| self.config.report.tile_url.clone());
        let mut written = Vec::new();
        for &format in &self.config.report.formats {
            let target = RenderTarget {
                format,
                output_dir: out_dir.to_path_buf(),
                embed_assets: self.config.report.embed_assets,
                tile_url: tile_url.clone(),
            };
            for p in report::emit(&model, &target).at(Stage::Report)? {
                if !written.contains(&p) {
                    written.push(p);
                }
            }
        }
        self.log
            .timed(Stage::Report, t, format!("{} files in {}", written.len(), out_dir.display()));
        Ok(written)
    }

    /// Full pipeline for one session directory into `out`.
    pub fn run(&self, session_dir: &Path, out: &Path) -> Result<RunSummary, PipelineError> {
        let result = self.run_inner(session_dir, out);
        if let Err(e) = &result {
            self.log.note(e.stage(), format!("failed: {e}"));
        }
        let log_path = out.join(LOG_FILE);
        if fs::create_dir_all(out).is_ok() {
            self.log
                .write(&log_path)
                .map_err(|e| PipelineError::io(Stage::Report, &log_path, e))?;
        }
        result
    }

    fn run_inner(&self, session_dir: &Path, out: &Path) -> Result<RunSummary, PipelineError> {
        fs::create_dir_all(out).map_err(|e| PipelineError::io(Stage::Ingest, out, e))?;
        let mut written = Vec::new();
        let data = self.load(session_dir)?;
        let path = out.join(session::DESCRIPTIONS_FILE);
        save_descriptions(&path, &data.descriptions).at(Stage::Describe)?;
        written.push(path);

        let clustered = self.cluster(&data)?;
        written.push(write_json(
            Stage::Embed,
            &out.join(EMBEDDINGS_FILE),
            &EmbeddingsFile::from_vectors(&clustered.space, &clustered.embeddings),
        )?);
        let summaries = self.representatives(&data.session, &data.descriptions, &clustered.partition)?;
        written.push(write_json(
            Stage::Cluster,
            &out.join(CLUSTERS_FILE),
            &clusters_file(&clustered.space, &clustered.params, &clustered.partition, &summaries),
        )?);
        let visuals = self.visuals(&data.session, &data.descriptions, &summaries)?;
        let metrics = self.evaluate(&data, &clustered.space, &clustered.params)?;

        let report_dir = out.join(REPORT_DIR);
        let view = ClusteredView {
            space: &clustered.space,
            params: &clustered.params,
            partition: &clustered.partition,
        };
        written.extend(self.report(&data, &view, &summaries, visuals, metrics.as_ref(), &report_dir)?);
        if let Some(m) = &metrics {
            written.push(write_json(Stage::Evaluate, &report_dir.join(METRICS_FILE), m)?);
        }
        if let Some(outcome) = &clustered.tuning {
            let p = report_dir.join(GRID_FILE);
            fs::write(&p, grid_tsv(&outcome.trials)).map_err(|e| PipelineError::io(Stage::Tune, &p, e))?;
            written.push(p);
        }
        Ok(RunSummary {
            descriptions: data.descriptions.len(),
            clusters: clustered.partition.k(),
            metrics,
            written,
        })
    }
}

/// Borrowed clustering result, so the `report` stage can also run from a
/// `clusters.json` loaded off disk.
pub struct ClusteredView<'a> {
    pub space: &'a str,
    pub params: &'a ClusterParams,
    pub partition: &'a Partition,
}

fn subset(d: &SessionData, keep: impl Fn(&DescriptionKey) -> bool) -> Vec<usize> {
    d.descriptions
        .iter()
        .enumerate()
        .filter(|(_, desc)| {
            keep(&DescriptionKey {
                session_id: d.session.session_id.clone(),
                clip_index: desc.clip_index,
            })
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn params_json(space: &str, params: &ClusterParams) -> serde_json::Value {
    serde_json::json!({
        "metric": params.metric,
        "threshold": params.threshold,
        "linkage": params.linkage,
        "space_id": space,
    })
}

pub fn describe_params(space: &str, params: &ClusterParams) -> String {
    format!(
        "{} linkage, {} distance, threshold {}, space {space}",
        params.linkage, params.metric, params.threshold
    )
}

pub fn clusters_file(space: &str, params: &ClusterParams, partition: &Partition, summaries: &[ClusterSummary]) -> ClustersFile {
    ClustersFile {
        params: ClustersFileParams {
            metric: params.metric,
            threshold: params.threshold,
            linkage: params.linkage,
            space_id: space.to_string(),
        },
        labels: partition.labels().to_vec(),
        representatives: summaries
            .iter()
            .map(|s| RepresentativeRecord {
                cluster_id: s.cluster_id,
                description_index: s.representative_index,
                frame: s.representative_frame.clone(),
            })
            .collect(),
    }
}

/// Rebuilds summaries from a `clusters.json`.
pub fn summaries_from_file(file: &ClustersFile, partition: &Partition) -> Vec<ClusterSummary> {
    let members = partition.clusters();
    file.representatives
        .iter()
        .map(|r| ClusterSummary {
            cluster_id: r.cluster_id,
            member_indices: members.get(r.cluster_id).cloned().unwrap_or_default(),
            representative_index: r.description_index,
            representative_frame: r.frame.clone(),
            color: cluster_color(r.cluster_id),
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<PathBuf, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(stage, dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(stage, path, e))?;
    Ok(path.to_path_buf())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(stage, path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| PipelineError::Data {
        stage,
        detail: format!("{}: schema violation at `{}`: {}", path.display(), e.path(), e.inner()),
    })
}

/// Scores a clustering file against a ground-truth file.
pub fn evaluate_files(clusters: &ClustersFile, truth: &GroundTruthLabeling, domain: &str) -> Result<MetricsRecord, PipelineError> {
    let pred = clusters.partition().map_err(|e| PipelineError::Data {
        stage: Stage::Evaluate,
        detail: e.to_string(),
    })?;
    truth.check_len(pred.len()).at(Stage::Evaluate)?;
    let scores = metrics::score(&truth.labels, &pred).at(Stage::Evaluate)?;
    let p = &clusters.params;
    let params = ClusterParams {
        metric: p.metric,
        threshold: p.threshold,
        linkage: p.linkage,
    };
    Ok(MetricsRecord::new(domain, pred.len(), scores, params_json(&p.space_id, &params)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_file_round_trips() {
        let v = vec![
            EmbeddingVector::normalized("s", vec![3.0, 4.0]).unwrap(),
            EmbeddingVector::normalized("s", vec![0.0, 1.0]).unwrap(),
        ];
        let f = EmbeddingsFile::from_vectors("s", &v);
        assert_eq!(f.dim, 2);
        assert_eq!(f.to_vectors().unwrap(), v);
        let bad = EmbeddingsFile {
            space_id: "s".into(),
            dim: 3,
            vectors: vec![vec![1.0, 0.0]],
        };
        assert!(bad.to_vectors().is_err());
    }

    #[test]
    fn errors_name_their_stage() {
        let e: Result<(), _> = Err(ClusterError::Empty);
        let e = e.at(Stage::Representatives).unwrap_err();
        assert_eq!(e.stage(), Stage::Representatives);
        assert!(e.to_string().starts_with("representatives: "));
    }
}
