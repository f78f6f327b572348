//! Chronological tuning/evaluation split and exhaustive grid search over
//! clustering hyperparameters, maximizing ARI on the tuning split.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterError, ClusterParams, Dendrogram, DistanceMatrix, Linkage, Metric, Partition};
use crate::embedding::EmbeddingVector;
use crate::metrics::{self, MetricsError, Scores};
use crate::session::SessionManifest;

/// Fewest descriptions a domain needs before it can be split.
pub const MIN_DESCRIPTIONS_PER_DOMAIN: usize = 5;

pub const GRID_TSV_HEADER: &str = "space\tmetric\tlinkage\tthreshold\tari\tnmi\tfmi\tk";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TuningError {
    #[error("domain `{domain}` has {got} descriptions, need at least {needed}")]
    InsufficientData { domain: String, got: usize, needed: usize },
    #[error("no ground truth available for the tuning split")]
    MissingGroundTruth,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("group `{group}` has no embeddings in space `{space}`")]
    MissingSpace { group: String, space: String },
    #[error("group `{group}`: {detail}")]
    Misaligned { group: String, detail: String },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    PerDomainChronological,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default = "default_fraction")]
    pub tuning_fraction: f64,
    #[serde(default = "default_strategy")]
    pub strategy: SplitStrategy,
}

fn default_fraction() -> f64 {
    0.2
}

fn default_strategy() -> SplitStrategy {
    SplitStrategy::PerDomainChronological
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            tuning_fraction: default_fraction(),
            strategy: default_strategy(),
        }
    }
}

/// A description is identified by its session and clip.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DescriptionKey {
    pub session_id: String,
    pub clip_index: u32,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Split {
    pub tuning: Vec<DescriptionKey>,
    pub eval: Vec<DescriptionKey>,
    /// domain key -> (tuning count, total)
    pub per_domain: BTreeMap<String, (usize, usize)>,
}

impl Split {
    pub fn is_tuning(&self, key: &DescriptionKey) -> bool {
        self.tuning.binary_search(key).is_ok()
    }
}

/// Per domain, the chronologically first `round(fraction * n)` descriptions
/// (at least one, at most `n - 1`) go to tuning. One description per clip.
pub fn split(sessions: &[SessionManifest], spec: &SplitSpec) -> Result<Split, TuningError> {
    if !(spec.tuning_fraction > 0.0 && spec.tuning_fraction < 1.0) {
        return Err(TuningError::InvalidSplit(format!(
            "tuning fraction must lie in (0, 1), got {}",
            spec.tuning_fraction
        )));
    }
    let mut by_domain: BTreeMap<String, Vec<(i64, DescriptionKey)>> = BTreeMap::new();
    for s in sessions {
        let entry = by_domain.entry(s.domain.as_key().to_string()).or_default();
        for c in &s.clips {
            entry.push((
                c.start_time.as_micros(),
                DescriptionKey {
                    session_id: s.session_id.clone(),
                    clip_index: c.clip_index,
                },
            ));
        }
    }
    let mut out = Split::default();
    for (domain, mut items) in by_domain {
        let n = items.len();
        if n < MIN_DESCRIPTIONS_PER_DOMAIN {
            return Err(TuningError::InsufficientData {
                domain,
                got: n,
                needed: MIN_DESCRIPTIONS_PER_DOMAIN,
            });
        }
        items.sort();
        let take = ((spec.tuning_fraction * n as f64).round() as usize).clamp(1, n - 1);
        for (i, (_, key)) in items.into_iter().enumerate() {
            if i < take {
                out.tuning.push(key);
            } else {
                out.eval.push(key);
            }
        }
        out.per_domain.insert(domain, (take, n));
    }
    out.tuning.sort();
    out.eval.sort();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Empty means "the pipeline's clustering space".
    #[serde(default)]
    pub embed_spaces: Vec<String>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_linkages")]
    pub linkages: Vec<Linkage>,
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

fn default_linkages() -> Vec<Linkage> {
    Linkage::ALL.to_vec()
}

/// 0.05 to 0.95 in steps of 0.05.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|i| (i * 5) as f64 / 100.0).collect()
}

impl GridSpec {
    pub fn with_spaces(spaces: Vec<String>) -> Self {
        Self {
            embed_spaces: spaces,
            metrics: default_metrics(),
            thresholds: default_thresholds(),
            linkages: default_linkages(),
        }
    }

    pub fn size(&self) -> usize {
        self.embed_spaces.len() * self.metrics.len() * self.thresholds.len() * self.linkages.len()
    }

    pub fn validate(&self) -> Result<(), TuningError> {
        let empty = [
            ("embed_spaces", self.embed_spaces.is_empty()),
            ("metrics", self.metrics.is_empty()),
            ("thresholds", self.thresholds.is_empty()),
            ("linkages", self.linkages.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(TuningError::InvalidGrid(format!("`{name}` must be non-empty")));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TuningError::InvalidGrid("thresholds must be strictly increasing".into()));
        }
        for m in &self.metrics {
            for &t in &self.thresholds {
                ClusterParams {
                    metric: *m,
                    threshold: t,
                    linkage: Linkage::Average,
                }
                .validate()
                .map_err(|e| TuningError::InvalidGrid(e.to_string()))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub space: String,
    pub metric: Metric,
    pub linkage: Linkage,
    pub threshold: f64,
}

impl TrialParams {
    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            metric: self.metric,
            threshold: self.threshold,
            linkage: self.linkage,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub params: TrialParams,
    pub ari: f64,
    pub nmi: f64,
    pub fmi: f64,
    pub k: usize,
}

/// Descriptions of one session (or domain) that are clustered together.
/// Clusters never span groups.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningGroup {
    pub name: String,
    pub truth: Partition,
    pub embeddings: HashMap<String, Vec<EmbeddingVector>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutcome {
    pub best: TrialResult,
    /// Every trial, in declaration order.
    pub trials: Vec<TrialResult>,
}

/// Concatenates per-group partitions with disjoint label ranges.
pub fn pool_partitions(parts: &[Partition]) -> Partition {
    let mut labels = Vec::new();
    let mut offset = 0;
    for p in parts {
        labels.extend(p.labels().iter().map(|l| l + offset));
        offset += p.k();
    }
    Partition::from_labels(labels).expect("at least one non-empty group")
}

fn group_vectors<'a>(group: &'a TuningGroup, space: &str) -> Result<&'a [EmbeddingVector], TuningError> {
    let vs = group.embeddings.get(space).ok_or_else(|| TuningError::MissingSpace {
        group: group.name.clone(),
        space: space.to_string(),
    })?;
    if vs.len() != group.truth.len() {
        return Err(TuningError::Misaligned {
            group: group.name.clone(),
            detail: format!("{} embeddings for {} ground-truth labels", vs.len(), group.truth.len()),
        });
    }
    Ok(vs)
}

/// Scores one configuration over all groups.
pub fn evaluate_params(groups: &[TuningGroup], space: &str, params: &ClusterParams) -> Result<(Scores, usize), TuningError> {
    if groups.is_empty() {
        return Err(TuningError::MissingGroundTruth);
    }
    params.validate()?;
    let mut preds = Vec::with_capacity(groups.len());
    for g in groups {
        preds.push(crate::clustering::cluster(group_vectors(g, space)?, params)?);
    }
    let truth = pool_partitions(&groups.iter().map(|g| g.truth.clone()).collect::<Vec<_>>());
    let pred = pool_partitions(&preds);
    Ok((metrics::score(&truth, &pred)?, pred.k()))
}

fn better(a: &TrialResult, a_pos: usize, b: &TrialResult, b_pos: usize) -> bool {
    if a.ari != b.ari {
        return a.ari > b.ari;
    }
    if a.nmi != b.nmi {
        return a.nmi > b.nmi;
    }
    if a.params.threshold != b.params.threshold {
        return a.params.threshold < b.params.threshold;
    }
    a_pos < b_pos
}

/// Picks the best trial: highest ARI, then higher NMI, then lower threshold,
/// then earlier declaration.
pub fn select_best(trials: &[TrialResult]) -> Option<&TrialResult> {
    let mut best: Option<(usize, &TrialResult)> = None;
    for (i, t) in trials.iter().enumerate() {
        match best {
            Some((bi, b)) if !better(t, i, b, bi) => {}
            _ => best = Some((i, t)),
        }
    }
    best.map(|(_, t)| t)
}

/// Evaluates every grid cell. Cells are enumerated space, metric, linkage,
/// threshold (outer to inner). One dendrogram per (space, metric, linkage)
/// and group is cut at each threshold, which yields the same partitions as
/// clustering each cell from scratch.
pub fn grid_search(groups: &[TuningGroup], grid: &GridSpec) -> Result<GridOutcome, TuningError> {
    grid.validate()?;
    if groups.is_empty() {
        return Err(TuningError::MissingGroundTruth);
    }
    let truth = pool_partitions(&groups.iter().map(|g| g.truth.clone()).collect::<Vec<_>>());
    if truth.len() < 2 {
        return Err(TuningError::Metrics(MetricsError::TooFew { needed: 2, got: truth.len() }));
    }
    let mut combos = Vec::new();
    for space in &grid.embed_spaces {
        for metric in &grid.metrics {
            for linkage in &grid.linkages {
                combos.push((space.clone(), *metric, *linkage));
            }
        }
    }
    let max_threshold = *grid.thresholds.last().expect("validated non-empty");

    let run = |(space, metric, linkage): &(String, Metric, Linkage)| -> Result<Vec<TrialResult>, TuningError> {
        let mut dendrograms = Vec::with_capacity(groups.len());
        for g in groups {
            let matrix = DistanceMatrix::from_vectors(group_vectors(g, space)?, *metric)?;
            dendrograms.push(Dendrogram::build(&matrix, *linkage, Some(max_threshold)));
        }
        grid.thresholds
            .iter()
            .map(|&threshold| {
                let pred = pool_partitions(&dendrograms.iter().map(|d| d.cut(threshold)).collect::<Vec<_>>());
                let s = metrics::score(&truth, &pred)?;
                Ok(TrialResult {
                    params: TrialParams {
                        space: space.clone(),
                        metric: *metric,
                        linkage: *linkage,
                        threshold,
                    },
                    ari: s.ari,
                    nmi: s.nmi,
                    fmi: s.fmi,
                    k: pred.k(),
                })
            })
            .collect()
    };

    #[cfg(feature = "native")]
    let per_combo: Vec<Result<Vec<TrialResult>, TuningError>> = {
        use rayon::prelude::*;
        combos.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "native"))]
    let per_combo: Vec<Result<Vec<TrialResult>, TuningError>> = combos.iter().map(run).collect();

    let mut trials = Vec::with_capacity(grid.size());
    for r in per_combo {
        trials.extend(r?);
    }
    let best = select_best(&trials).expect("grid is non-empty").clone();
    Ok(GridOutcome { best, trials })
}

/// `grid_results.tsv`: one row per trial with 6-decimal fixed-point reals.
pub fn grid_tsv(trials: &[TrialResult]) -> String {
    let mut out = String::with_capacity(64 * (trials.len() + 1));
    out.push_str(GRID_TSV_HEADER);
    out.push('\n');
    for t in trials {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            t.params.space, t.params.metric, t.params.linkage, t.params.threshold, t.ari, t.nmi, t.fmi, t.k
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{Clip, Domain, FrameRef};
    use crate::time::Timestamp;

    fn session(id: &str, domain: Domain, start_s: i64, clips: usize) -> SessionManifest {
        SessionManifest {
            session_id: id.into(),
            domain,
            recorded_at: Timestamp(start_s * 1_000_000),
            clips: (0..clips)
                .map(|i| {
                    let s = (start_s + 5 * i as i64) * 1_000_000;
                    Clip::new(i as u32, Timestamp(s), Timestamp(s + 5_000_000), vec![FrameRef::new("f.png")])
                })
                .collect(),
            track: vec![],
            root: ".".into(),
        }
    }

    #[test]
    fn hundred_clips_first_twenty() {
        let s = session("a", Domain::City, 0, 100);
        let sp = split(&[s], &SplitSpec::default()).unwrap();
        assert_eq!(sp.tuning.len(), 20);
        assert_eq!(sp.eval.len(), 80);
        assert!(sp.tuning.iter().all(|k| k.clip_index < 20));
    }

    #[test]
    fn single_clip_domain_is_insufficient() {
        let err = split(&[session("a", Domain::City, 0, 1)], &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, TuningError::InsufficientData { ref domain, got: 1, .. } if domain == "city"));
    }

    #[test]
    fn chronology_not_input_order() {
        let early = session("late-id", Domain::City, 0, 5);
        let late = session("early-id", Domain::City, 10_000, 5);
        let a = split(&[early.clone(), late.clone()], &SplitSpec::default()).unwrap();
        let b = split(&[late, early], &SplitSpec::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tuning.len(), 2);
        assert!(a.tuning.iter().all(|k| k.session_id == "late-id"));
    }

    #[test]
    fn fraction_bounds() {
        let s = session("a", Domain::City, 0, 10);
        for f in [0.0, 1.0, -0.5, f64::NAN] {
            let spec = SplitSpec { tuning_fraction: f, ..SplitSpec::default() };
            assert!(matches!(split(&[s.clone()], &spec), Err(TuningError::InvalidSplit(_))));
        }
        let spec = SplitSpec { tuning_fraction: 0.01, ..SplitSpec::default() };
        assert_eq!(split(&[s.clone()], &spec).unwrap().tuning.len(), 1);
        let spec = SplitSpec { tuning_fraction: 0.99, ..SplitSpec::default() };
        assert_eq!(split(&[s], &spec).unwrap().tuning.len(), 9);
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::with_spaces(vec!["s".into()]);
        assert_eq!(g.thresholds.len(), 19);
        assert_eq!(g.thresholds[2], 0.15);
        assert!(g.validate().is_ok());
        g.thresholds = vec![0.2, 0.1];
        assert!(g.validate().is_err());
        g.thresholds = vec![0.5, 2.5];
        assert!(g.validate().is_err());
        g.metrics = vec![Metric::Euclidean];
        assert!(g.validate().is_ok());
        g.embed_spaces.clear();
        assert!(g.validate().is_err());
    }

    fn trial(ari: f64, nmi: f64, threshold: f64) -> TrialResult {
        TrialResult {
            params: TrialParams {
                space: "s".into(),
                metric: Metric::Cosine,
                linkage: Linkage::Average,
                threshold,
            },
            ari,
            nmi,
            fmi: 0.0,
            k: 1,
        }
    }

    #[test]
    fn tie_break_order() {
        let trials = vec![trial(0.5, 0.1, 0.3), trial(0.5, 0.2, 0.4), trial(0.5, 0.2, 0.2), trial(0.4, 0.9, 0.1)];
        assert_eq!(select_best(&trials), Some(&trials[2]));
        let trials = vec![trial(0.5, 0.2, 0.3), trial(0.5, 0.2, 0.3)];
        assert!(std::ptr::eq(select_best(&trials).unwrap(), &trials[0]));
    }

    #[test]
    fn tsv_format() {
        let tsv = grid_tsv(&[trial(1.0, 0.5, 0.05)]);
        assert_eq!(tsv, format!("{GRID_TSV_HEADER}\ns\tcosine\taverage\t0.050000\t1.000000\t0.500000\t0.000000\t1\n"));
    }
}
