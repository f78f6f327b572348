//! Partition agreement: contingency table, Adjusted Rand Index, normalized
//! mutual information (arithmetic-mean normalization, natural log) and the
//! Fowlkes-Mallows index.
//!
//! Pair counts are exact 128-bit integers; floating point only enters at
//! the final division. Degenerate conventions:
//!
//! * ARI with a zero denominator is 1 if the partitions are identical up to
//!   relabeling, else 0.
//! * NMI is 1 when both entropies are zero.
//! * FMI is 0 when either partition has no co-clustered pair.

use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::session::Domain;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("partitions have different lengths: truth={truth}, pred={pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("need at least {needed} elements, got {got}")]
    TooFew { needed: usize, got: usize },
}

/// Counts `n_ij`: rows are ground-truth classes, columns predicted clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// True when each row and each column holds exactly one non-zero cell,
    /// i.e. the partitions agree up to relabeling.
    pub fn is_bijective(&self) -> bool {
        let rows_ok = self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1);
        let cols_ok = (0..self.col_sums.len())
            .all(|j| self.counts.iter().filter(|r| r[j] > 0).count() == 1);
        rows_ok && cols_ok
    }

    fn pair_sums(&self) -> PairSums {
        PairSums {
            cells: self.counts.iter().flatten().map(|&c| choose2(c)).sum(),
            rows: self.row_sums.iter().map(|&a| choose2(a)).sum(),
            cols: self.col_sums.iter().map(|&b| choose2(b)).sum(),
            total: choose2(self.n),
        }
    }
}

struct PairSums {
    cells: u128,
    rows: u128,
    cols: u128,
    total: u128,
}

fn choose2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

fn check_lengths(truth: &Partition, pred: &Partition, needed: usize) -> Result<(), MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.len() < needed {
        return Err(MetricsError::TooFew {
            needed,
            got: truth.len(),
        });
    }
    Ok(())
}

pub fn contingency(truth: &Partition, pred: &Partition) -> Result<ContingencyTable, MetricsError> {
    check_lengths(truth, pred, 2)?;
    Ok(build_table(truth, pred))
}

fn build_table(truth: &Partition, pred: &Partition) -> ContingencyTable {
    let mut counts = vec![vec![0u64; pred.k()]; truth.k()];
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        counts[t][p] += 1;
    }
    let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..pred.k()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    ContingencyTable {
        counts,
        row_sums,
        col_sums,
        n: truth.len() as u64,
    }
}

/// Hubert-Arabie adjusted Rand index.
pub fn ari(truth: &Partition, pred: &Partition) -> Result<f64, MetricsError> {
    let table = contingency(truth, pred)?;
    Ok(ari_from_table(&table))
}

pub fn ari_from_table(table: &ContingencyTable) -> f64 {
    let s = table.pair_sums();
    // (index - expected) / (max - expected), scaled through by 2 * total
    let index = s.cells as i128;
    let (rows, cols, total) = (s.rows as i128, s.cols as i128, s.total as i128);
    let numerator = 2 * (index * total - rows * cols);
    let denominator = (rows + cols) * total - 2 * rows * cols;
    if denominator == 0 {
        return if table.is_bijective() { 1.0 } else { 0.0 };
    }
    numerator as f64 / denominator as f64
}

/// Mutual information normalized by the arithmetic mean of the entropies.
pub fn nmi(truth: &Partition, pred: &Partition) -> Result<f64, MetricsError> {
    check_lengths(truth, pred, 1)?;
    Ok(nmi_from_table(&build_table(truth, pred)))
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    -sums
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn nmi_from_table(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let hu = entropy(&table.row_sums, n);
    let hv = entropy(&table.col_sums, n);
    if hu + hv == 0.0 {
        return 1.0;
    }
    if table.is_bijective() {
        return 1.0;
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let outer = table.row_sums[i] as f64 * table.col_sums[j] as f64;
            mi += c / n * (n * c / outer).ln();
        }
    }
    (2.0 * mi / (hu + hv)).clamp(0.0, 1.0)
}

/// Fowlkes-Mallows index `TP / sqrt((TP + FP)(TP + FN))`.
pub fn fmi(truth: &Partition, pred: &Partition) -> Result<f64, MetricsError> {
    let table = contingency(truth, pred)?;
    Ok(fmi_from_table(&table))
}

pub fn fmi_from_table(table: &ContingencyTable) -> f64 {
    let s = table.pair_sums();
    if s.rows == 0 || s.cols == 0 {
        return 0.0;
    }
    if s.rows == s.cols {
        return s.cells as f64 / s.rows as f64;
    }
    s.cells as f64 / ((s.rows as f64).sqrt() * (s.cols as f64).sqrt())
}

/// Pair counts over all unordered pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    /// together in both
    pub tp: u64,
    /// together in pred only
    pub fp: u64,
    /// together in truth only
    pub fn_: u64,
    /// apart in both
    pub tn: u64,
}

/// Brute-force O(n^2) enumeration of every unordered pair.
pub fn pair_oracle(truth: &Partition, pred: &Partition) -> Result<PairCounts, MetricsError> {
    check_lengths(truth, pred, 2)?;
    let (t, p) = (truth.labels(), pred.labels());
    let mut c = PairCounts { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for i in 0..t.len() {
        for j in (i + 1)..t.len() {
            match (t[i] == t[j], p[i] == p[j]) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

/// All three indices for one comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub ari: f64,
    pub nmi: f64,
    pub fmi: f64,
}

pub fn score(truth: &Partition, pred: &Partition) -> Result<Scores, MetricsError> {
    let table = contingency(truth, pred)?;
    Ok(Scores {
        ari: ari_from_table(&table),
        nmi: nmi_from_table(&table),
        fmi: fmi_from_table(&table),
    })
}

/// Manual clustering of the descriptions of one session.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthLabeling {
    pub labels: Partition,
    pub annotator_id: String,
    pub instructions_version: Option<String>,
    pub domain: Option<Domain>,
}

/// `ground_truth.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub annotator_id: String,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GroundTruthError {
    #[error("schema violation at `{field}`: {detail}")]
    SchemaViolation { field: String, detail: String },
    #[error("ground truth has {got} labels but there are {expected} descriptions")]
    LengthMismatch { expected: usize, got: usize },
}

impl GroundTruthLabeling {
    pub fn parse(text: &str) -> Result<Self, GroundTruthError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: GroundTruthFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            GroundTruthError::SchemaViolation {
                field: if path == "." { "ground_truth".into() } else { path },
                detail: e.into_inner().to_string(),
            }
        })?;
        if file.annotator_id.trim().is_empty() {
            return Err(GroundTruthError::SchemaViolation {
                field: "annotator_id".into(),
                detail: "must be non-empty".into(),
            });
        }
        let labels = Partition::from_labels(file.labels).map_err(|_| GroundTruthError::SchemaViolation {
            field: "labels".into(),
            detail: "must contain at least one label".into(),
        })?;
        Ok(GroundTruthLabeling {
            labels,
            annotator_id: file.annotator_id,
            instructions_version: file.instructions_version,
            domain: file.domain,
        })
    }

    pub fn check_len(&self, expected: usize) -> Result<(), GroundTruthError> {
        if self.labels.len() != expected {
            return Err(GroundTruthError::LengthMismatch {
                expected,
                got: self.labels.len(),
            });
        }
        Ok(())
    }
}

/// `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub domain: String,
    pub n: usize,
    pub ari: f64,
    pub nmi_arithmetic: f64,
    pub fmi: f64,
    pub params: serde_json::Value,
}

impl MetricsRecord {
    pub fn new(domain: &str, n: usize, scores: Scores, params: serde_json::Value) -> Self {
        Self {
            domain: domain.to_string(),
            n,
            ari: scores.ari,
            nmi_arithmetic: scores.nmi,
            fmi: scores.fmi,
            params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(labels: &[usize]) -> Partition {
        Partition::from_labels(labels.iter().copied()).unwrap()
    }

    #[test]
    fn contingency_examples() {
        let t = contingency(&p(&[0, 0, 1, 1]), &p(&[0, 0, 1, 1])).unwrap();
        assert_eq!(t.counts(), &[vec![2, 0], vec![0, 2]]);
        let t = contingency(&p(&[0, 0, 1, 1]), &p(&[0, 1, 0, 1])).unwrap();
        assert_eq!(t.counts(), &[vec![1, 1], vec![1, 1]]);
        let t = contingency(&p(&[0, 0, 0, 1, 1]), &p(&[0, 0, 1, 1, 1])).unwrap();
        assert_eq!(t.counts(), &[vec![2, 1], vec![0, 2]]);
        assert_eq!(t.row_sums(), &[3, 2]);
        assert_eq!(t.col_sums(), &[2, 3]);
        assert_eq!(t.n(), 5);
    }

    #[test]
    fn length_checks() {
        assert_eq!(
            contingency(&p(&[0, 1]), &p(&[0, 1, 1])),
            Err(MetricsError::LengthMismatch { truth: 2, pred: 3 })
        );
        assert!(matches!(ari(&p(&[0]), &p(&[0])), Err(MetricsError::TooFew { .. })));
        assert_eq!(nmi(&p(&[0]), &p(&[0])).unwrap(), 1.0);
    }

    #[test]
    fn identical_partitions_score_one() {
        let a = p(&[0, 0, 1, 2, 2, 2]);
        let b = p(&[5, 5, 3, 1, 1, 1]);
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert_eq!(nmi(&a, &b).unwrap(), 1.0);
        assert_eq!(fmi(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn one_cluster_against_singletons() {
        let one = p(&[0; 6]);
        let singles = Partition::singletons(6).unwrap();
        assert_eq!(ari(&one, &singles).unwrap(), 0.0);
        assert_eq!(ari(&singles, &one).unwrap(), 0.0);
        assert_eq!(fmi(&one, &singles).unwrap(), 0.0);
        assert_eq!(fmi(&singles, &one).unwrap(), 0.0);
        assert_eq!(nmi(&one, &singles).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_conventions() {
        // both single-cluster: denominator vanishes, identical
        assert_eq!(ari(&p(&[0, 0, 0]), &p(&[1, 1, 1])).unwrap(), 1.0);
        assert_eq!(nmi(&p(&[0, 0, 0]), &p(&[1, 1, 1])).unwrap(), 1.0);
        // both all-singletons: identical, but no co-clustered pair for FMI
        let s = Partition::singletons(4).unwrap();
        assert_eq!(ari(&s, &s).unwrap(), 1.0);
        assert_eq!(fmi(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn independent_two_by_two() {
        let (t, q) = (p(&[0, 0, 1, 1]), p(&[0, 1, 0, 1]));
        assert_eq!(nmi(&t, &q).unwrap(), 0.0);
        assert_eq!(pair_oracle(&t, &q).unwrap(), PairCounts { tp: 0, fp: 2, fn_: 2, tn: 2 });
    }

    #[test]
    fn pair_oracle_examples() {
        let t = p(&[0, 0, 1, 1]);
        assert_eq!(pair_oracle(&t, &t).unwrap(), PairCounts { tp: 2, fp: 0, fn_: 0, tn: 4 });
        let two = p(&[0, 0]);
        assert_eq!(pair_oracle(&two, &two).unwrap(), PairCounts { tp: 1, fp: 0, fn_: 0, tn: 0 });
    }

    #[test]
    fn five_element_example() {
        let (t, q) = (p(&[0, 0, 0, 1, 1]), p(&[0, 0, 1, 1, 1]));
        let c = pair_oracle(&t, &q).unwrap();
        assert_eq!(c, PairCounts { tp: 2, fp: 2, fn_: 2, tn: 4 });
        assert_eq!(fmi(&t, &q).unwrap(), 0.5);
        // pair-count form of ARI: 2(TP*TN - FN*FP) / ((TP+FN)(FN+TN) + (TP+FP)(FP+TN))
        let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
        let oracle = 2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn));
        assert_eq!(oracle, 1.0 / 6.0);
        assert!((ari(&t, &q).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn ground_truth_parsing() {
        let g = GroundTruthLabeling::parse(r#"{"annotator_id":"a","labels":[3,3,1],"instructions_version":"v2"}"#).unwrap();
        assert_eq!(g.labels.labels(), &[0, 0, 1]);
        assert!(g.check_len(3).is_ok());
        assert_eq!(g.check_len(4), Err(GroundTruthError::LengthMismatch { expected: 4, got: 3 }));
        let err = GroundTruthLabeling::parse(r#"{"annotator_id":"a","labels":"x"}"#).unwrap_err();
        assert!(matches!(err, GroundTruthError::SchemaViolation { ref field, .. } if field == "labels"), "{err}");
        assert!(GroundTruthLabeling::parse("{not json").is_err());
    }
}
