//! Browser bindings for the demo page in `www/`.
//!
//! Three operations are exposed: threshold clustering of points placed on
//! a canvas, partition agreement scores, and noun prompts for a sentence.
//! The logic lives in plain functions so it is testable natively; the
//! `#[wasm_bindgen]` wrappers only convert errors and serialize.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fieldscribe_core::clustering::{Dendrogram, DistanceMatrix, Linkage};
use fieldscribe_core::metrics::{contingency, pair_oracle, score};
use fieldscribe_core::palette::cluster_color;
use fieldscribe_core::prompts::{ExtractionMode, NounExtractor};
use fieldscribe_core::Partition;

#[derive(Debug, Serialize, PartialEq)]
pub struct Exploration {
    /// Cluster label per point at the chosen threshold.
    pub labels: Vec<usize>,
    /// Hex color per label.
    pub colors: Vec<String>,
    pub k: usize,
    /// `(threshold, k)` over the sweep, for the cluster-count chart.
    pub sweep: Vec<(f64, usize)>,
    /// Merge heights, in merge order.
    pub merges: Vec<f64>,
}

fn euclidean_matrix(xy: &[f64]) -> Result<DistanceMatrix, String> {
    if xy.len() % 2 != 0 {
        return Err("coordinates must come in x, y pairs".into());
    }
    let n = xy.len() / 2;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = (xy[2 * i] - xy[2 * j]).hypot(xy[2 * i + 1] - xy[2 * j + 1]);
        }
    }
    DistanceMatrix::from_square(n, data).map_err(|e| e.to_string())
}

pub fn explore(xy: &[f64], linkage: &str, threshold: f64, sweep_max: f64, sweep_steps: usize) -> Result<Exploration, String> {
    let linkage: Linkage = linkage.parse().map_err(|e: fieldscribe_core::clustering::ClusterError| e.to_string())?;
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(format!("threshold must be non-negative, got {threshold}"));
    }
    let m = euclidean_matrix(xy)?;
    let tree = Dendrogram::build(&m, linkage, None);
    let p = tree.cut(threshold);
    let steps = sweep_steps.max(1);
    let sweep = (0..=steps)
        .map(|i| {
            let t = sweep_max * i as f64 / steps as f64;
            (t, tree.cut(t).k())
        })
        .collect();
    Ok(Exploration {
        colors: (0..p.k()).map(|c| cluster_color(c).hex()).collect(),
        labels: p.labels().to_vec(),
        k: p.k(),
        sweep,
        merges: tree.merges().iter().map(|m| m.distance).collect(),
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Comparison {
    pub ari: f64,
    pub nmi_arithmetic: f64,
    pub fmi: f64,
    /// Rows are truth classes, columns predicted clusters.
    pub contingency: Vec<Vec<u64>>,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Parses `"0 0 1, 2"` style label lists.
pub fn parse_labels(raw: &str) -> Result<Partition, String> {
    let labels = raw
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| format!("`{t}` is not a label")))
        .collect::<Result<Vec<_>, _>>()?;
    Partition::from_labels(labels).map_err(|e| e.to_string())
}

pub fn compare(truth: &str, pred: &str) -> Result<Comparison, String> {
    let (t, p) = (parse_labels(truth)?, parse_labels(pred)?);
    let s = score(&t, &p).map_err(|e| e.to_string())?;
    let table = contingency(&t, &p).map_err(|e| e.to_string())?;
    let pairs = pair_oracle(&t, &p).map_err(|e| e.to_string())?;
    Ok(Comparison {
        ari: s.ari,
        nmi_arithmetic: s.nmi,
        fmi: s.fmi,
        contingency: table.counts().to_vec(),
        tp: pairs.tp,
        fp: pairs.fp,
        fn_: pairs.fn_,
        tn: pairs.tn,
    })
}

pub fn prompts(text: &str, cap: usize) -> Result<Vec<String>, String> {
    NounExtractor::new(cap.max(1))
        .extract(text, ExtractionMode::Heuristic)
        .map(|p| p.nouns().to_vec())
        .map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("serializable"))
        .map_err(|e| JsError::new(&e))
}

/// JSON [`Exploration`] for points `[x0, y0, x1, y1, ...]`.
#[wasm_bindgen]
pub fn explore_clusters(xy: &[f64], linkage: &str, threshold: f64, sweep_max: f64) -> Result<String, JsError> {
    to_json(explore(xy, linkage, threshold, sweep_max, 60))
}

/// JSON [`Comparison`] of two label lists.
#[wasm_bindgen]
pub fn compare_partitions(truth: &str, pred: &str) -> Result<String, JsError> {
    to_json(compare(truth, pred))
}

/// JSON array of noun prompts.
#[wasm_bindgen]
pub fn extract_prompts(text: &str, cap: usize) -> Result<String, JsError> {
    to_json(prompts(text, cap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blobs_split_at_a_middle_threshold() {
        let xy = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 10.0, 10.0, 11.0, 10.0];
        let e = explore(&xy, "average", 3.0, 20.0, 20).unwrap();
        assert_eq!(e.labels, vec![0, 0, 0, 1, 1]);
        assert_eq!(e.k, 2);
        assert_eq!(e.colors, vec!["#E6194B", "#3CB44B"]);
        assert_eq!(e.sweep.first(), Some(&(0.0, 5)));
        assert_eq!(e.sweep.last().unwrap().1, 1);
        assert!(e.sweep.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(e.merges.len(), 4);
        assert!(explore(&xy[..3], "average", 1.0, 1.0, 1).is_err());
        assert!(explore(&xy, "ward", 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn comparison_matches_the_pair_counts() {
        let c = compare("0 0 0 1 1", "0,0,1,1,1").unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 2, 2, 4));
        assert_eq!(c.fmi, 0.5);
        assert_eq!(c.contingency, vec![vec![2, 1], vec![0, 2]]);
        assert_eq!(compare("1 1 2 2", "5 5 7 7").unwrap().ari, 1.0);
        assert!(compare("0 1", "0 1 2").is_err());
        assert!(compare("0 x", "0 1").is_err());
    }

    #[test]
    fn prompts_for_a_street_scene() {
        assert_eq!(prompts("A cyclist is riding down a city street.", 12).unwrap(), ["cyclist", "city", "street"]);
        assert_eq!(prompts("Cars, cars and more cars near a bus.", 1).unwrap(), ["car"]);
        assert!(prompts("the", 12).is_err());
    }
}
