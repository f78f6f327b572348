//! Threshold-cut agglomerative clustering of description embeddings.
//!
//! Merging repeatedly joins the pair of clusters with the smallest linkage
//! distance while that distance is at most the threshold. Equal distances
//! are broken by the pair of smallest member indices, compared
//! lexicographically, using exact equality on the computed doubles. Labels
//! are renumbered by first occurrence.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::palette::Rgb;
use crate::session::FrameRef;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("embedding spaces differ: `{left}` ({left_dim}d) vs `{right}` ({right_dim}d)")]
    SpaceMismatch {
        left: String,
        left_dim: usize,
        right: String,
        right_dim: usize,
    },
    #[error("nothing to cluster")]
    Empty,
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
    Single,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Cosine, Metric::Euclidean];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl Linkage {
    pub const ALL: [Linkage; 3] = [Linkage::Average, Linkage::Complete, Linkage::Single];

    pub fn as_str(&self) -> &'static str {
        match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            other => Err(ClusterError::InvalidParams(format!("unknown metric `{other}`"))),
        }
    }
}

impl FromStr for Linkage {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(ClusterError::InvalidParams(format!("unknown linkage `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    pub metric: Metric,
    /// Merge cutoff in the metric's distance units.
    pub threshold: f64,
    #[serde(default = "default_linkage")]
    pub linkage: Linkage,
}

fn default_linkage() -> Linkage {
    Linkage::Average
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            metric: Metric::Cosine,
            threshold: 0.3,
            linkage: Linkage::Average,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(ClusterError::InvalidParams(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.metric == Metric::Cosine && self.threshold > 2.0 {
            return Err(ClusterError::InvalidParams(format!(
                "cosine threshold must lie in (0, 2], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("a partition needs at least one element")]
    Empty,
}

/// Cluster labels index-aligned with the description list, renumbered so
/// labels appear as `0, 1, 2, ...` in order of first occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn from_labels<I: IntoIterator<Item = usize>>(labels: I) -> Result<Self, PartitionError> {
        let raw: Vec<usize> = labels.into_iter().collect();
        if raw.is_empty() {
            return Err(PartitionError::Empty);
        }
        let mut mapping = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|l| {
                let next = mapping.len();
                *mapping.entry(*l).or_insert(next)
            })
            .collect();
        Ok(Partition { k: mapping.len(), labels })
    }

    pub fn singletons(n: usize) -> Result<Self, PartitionError> {
        Self::from_labels(0..n)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of every cluster, by label.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let labels = Vec::<usize>::deserialize(d)?;
        Partition::from_labels(labels).map_err(serde::de::Error::custom)
    }
}

fn check_same_space(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), ClusterError> {
    if a.space_id() != b.space_id() || a.dim() != b.dim() {
        return Err(ClusterError::SpaceMismatch {
            left: a.space_id().to_string(),
            left_dim: a.dim(),
            right: b.space_id().to_string(),
            right_dim: b.dim(),
        });
    }
    Ok(())
}

/// Cosine distance is `1 - a.b` on unit vectors, clamped to `[0, 2]`;
/// Euclidean is the L2 norm of the difference.
pub fn distance(a: &EmbeddingVector, b: &EmbeddingVector, metric: Metric) -> Result<f64, ClusterError> {
    check_same_space(a, b)?;
    Ok(raw_distance(a.values(), b.values(), metric))
}

fn raw_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Cosine => {
            if a == b {
                return 0.0;
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (1.0 - dot).clamp(0.0, 2.0)
        }
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
    }
}

/// Symmetric pairwise distance matrix, stored dense.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_vectors(vectors: &[EmbeddingVector], metric: Metric) -> Result<Self, ClusterError> {
        let first = vectors.first().ok_or(ClusterError::Empty)?;
        for v in &vectors[1..] {
            check_same_space(first, v)?;
        }
        let n = vectors.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = raw_distance(vectors[i].values(), vectors[j].values(), metric);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(Self { n, data })
    }

    /// Builds from a full square matrix given row by row.
    pub fn from_square(n: usize, data: Vec<f64>) -> Result<Self, ClusterError> {
        if n == 0 {
            return Err(ClusterError::Empty);
        }
        if data.len() != n * n || data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(ClusterError::InvalidParams(
                "distance matrix must be n*n finite non-negative values".into(),
            ));
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// One merge step: clusters whose smallest members are `left < right`
/// were joined at `distance`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

/// Merge history of one agglomeration, possibly stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Candidate {
    distance: f64,
    lo: usize,
    hi: usize,
}

impl Candidate {
    fn new(distance: f64, a: usize, b: usize) -> Self {
        Candidate {
            distance,
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    fn beats(&self, other: &Candidate) -> bool {
        self.distance < other.distance
            || (self.distance == other.distance && (self.lo, self.hi) < (other.lo, other.hi))
    }
}

impl Dendrogram {
    /// Runs the agglomeration. With `stop_above = Some(t)` merging halts at
    /// the first pair farther apart than `t`.
    ///
    /// Clusters live in the slot of their smallest member, which makes the
    /// slot pair the tie-break key. Single and complete linkage update rows
    /// with min/max; average linkage keeps exact sums of member distances.
    pub fn build(matrix: &DistanceMatrix, linkage: Linkage, stop_above: Option<f64>) -> Self {
        let n = matrix.len();
        let mut active = vec![true; n];
        let mut size = vec![1usize; n];
        // linkage distance between slots; for average this holds the sum
        let mut link: Vec<f64> = matrix.data.clone();
        let value = |link: &[f64], size: &[usize], i: usize, j: usize| -> f64 {
            match linkage {
                Linkage::Average => link[i * n + j] / (size[i] * size[j]) as f64,
                _ => link[i * n + j],
            }
        };
        let row_best = |link: &[f64], size: &[usize], active: &[bool], i: usize| -> Option<Candidate> {
            let mut best: Option<Candidate> = None;
            for j in 0..n {
                if j == i || !active[j] {
                    continue;
                }
                let c = Candidate::new(value(link, size, i, j), i, j);
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
            best
        };
        let mut best: Vec<Option<Candidate>> = (0..n).map(|i| row_best(&link, &size, &active, i)).collect();
        let mut merges = Vec::with_capacity(n.saturating_sub(1));

        loop {
            let mut global: Option<Candidate> = None;
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                if let Some(c) = best[i] {
                    if global.as_ref().is_none_or(|g| c.beats(g)) {
                        global = Some(c);
                    }
                }
            }
            let Some(pick) = global else { break };
            if stop_above.is_some_and(|t| pick.distance > t) {
                break;
            }
            let (a, b) = (pick.lo, pick.hi);
            merges.push(Merge {
                left: a,
                right: b,
                distance: pick.distance,
            });
            active[b] = false;
            for k in 0..n {
                if !active[k] || k == a {
                    continue;
                }
                let merged = match linkage {
                    Linkage::Single => link[a * n + k].min(link[b * n + k]),
                    Linkage::Complete => link[a * n + k].max(link[b * n + k]),
                    Linkage::Average => link[a * n + k] + link[b * n + k],
                };
                link[a * n + k] = merged;
                link[k * n + a] = merged;
            }
            size[a] += size[b];
            best[b] = None;
            best[a] = row_best(&link, &size, &active, a);
            for k in 0..n {
                if !active[k] || k == a {
                    continue;
                }
                let stale = best[k].is_some_and(|c| c.lo == a || c.hi == a || c.lo == b || c.hi == b);
                if stale {
                    best[k] = row_best(&link, &size, &active, k);
                } else {
                    let c = Candidate::new(value(&link, &size, k, a), k, a);
                    if best[k].as_ref().is_none_or(|cur| c.beats(cur)) {
                        best[k] = Some(c);
                    }
                }
            }
        }
        Dendrogram { n, merges }
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Partition after applying every leading merge at distance `<= threshold`.
    pub fn cut(&self, threshold: f64) -> Partition {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges {
            if m.distance > threshold {
                break;
            }
            let (ra, rb) = (find(&mut parent, m.left), find(&mut parent, m.right));
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        Partition::from_labels(roots).expect("dendrogram over at least one point")
    }
}

/// Clusters `vectors` under `params`.
pub fn cluster(vectors: &[EmbeddingVector], params: &ClusterParams) -> Result<Partition, ClusterError> {
    params.validate()?;
    let matrix = DistanceMatrix::from_vectors(vectors, params.metric)?;
    Ok(cluster_matrix(&matrix, params.threshold, params.linkage))
}

pub fn cluster_matrix(matrix: &DistanceMatrix, threshold: f64, linkage: Linkage) -> Partition {
    Dendrogram::build(matrix, linkage, Some(threshold)).cut(threshold)
}

/// Uniformly picks one member with a PCG-32 generator whose state is the
/// pipeline seed and whose stream is the cluster id.
pub fn select_representative(members: &[usize], seed: u64, cluster_id: usize) -> Result<usize, ClusterError> {
    if members.is_empty() {
        return Err(ClusterError::Empty);
    }
    let mut rng = Pcg32::new(seed, cluster_id as u64);
    let pick = rng.gen_range(0..members.len() as u64) as usize;
    Ok(members[pick])
}

/// Index of the image vector most similar to `text`, ties going to the
/// earliest image. Returns the index and the cosine similarity.
pub fn argmax_similarity(text: &EmbeddingVector, images: &[EmbeddingVector]) -> Result<(usize, f64), ClusterError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, img) in images.iter().enumerate() {
        check_same_space(text, img)?;
        let sim = if text.values() == img.values() { 1.0 } else { text.dot(img).clamp(-1.0, 1.0) };
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((i, sim));
        }
    }
    best.ok_or(ClusterError::Empty)
}

/// Per-cluster digest used by the report.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub member_indices: Vec<usize>,
    pub representative_index: usize,
    pub representative_frame: FrameRef,
    pub color: Rgb,
}

/// `clusters.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClustersFile {
    pub params: ClustersFileParams,
    pub labels: Vec<usize>,
    pub representatives: Vec<RepresentativeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClustersFileParams {
    pub metric: Metric,
    pub threshold: f64,
    pub linkage: Linkage,
    pub space_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentativeRecord {
    pub cluster_id: usize,
    pub description_index: usize,
    pub frame: FrameRef,
}

impl ClustersFile {
    pub fn partition(&self) -> Result<Partition, PartitionError> {
        Partition::from_labels(self.labels.iter().copied())
    }
}
