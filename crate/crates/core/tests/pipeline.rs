use std::fs;
use std::path::{Path, PathBuf};

use fieldscribe_core::clustering::ClustersFile;
use fieldscribe_core::config::{ClusteringChoice, PipelineConfig, ReportFormat};
use fieldscribe_core::metrics::{ari, GroundTruthLabeling};
use fieldscribe_core::pipeline::{mock_gateway, read_json, Pipeline, Stage, CLUSTERS_FILE, LOG_FILE};
use fieldscribe_core::tuning::GRID_TSV_HEADER;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic-a")
}

fn pipeline(config: PipelineConfig) -> Pipeline {
    let gw = mock_gateway(&config, &[&fixture()]).unwrap();
    Pipeline::new(config, gw)
}

fn truth() -> GroundTruthLabeling {
    GroundTruthLabeling::parse(&fs::read_to_string(fixture().join("ground_truth.json")).unwrap()).unwrap()
}

#[test]
fn default_params_recover_the_planted_groups() {
    let p = pipeline(PipelineConfig::default());
    let data = p.load(&fixture()).unwrap();
    assert_eq!(data.descriptions.len(), 24);
    let c = p.cluster(&data).unwrap();
    assert_eq!(c.partition.k(), 3);
    assert_eq!(ari(&truth().labels, &c.partition).unwrap(), 1.0);
}

#[test]
fn run_twice_is_byte_identical() {
    let mut config = PipelineConfig::default();
    config.report.formats = vec![ReportFormat::Md, ReportFormat::Html, ReportFormat::Tex];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = pipeline(config.clone()).run(&fixture(), a.path()).unwrap();
    pipeline(config).run(&fixture(), b.path()).unwrap();
    assert_eq!(sa.descriptions, 24);
    assert_eq!(sa.clusters, 3);
    for f in ["report/report.md", "report/map.geojson", "clusters.json", "report/report.html", "report/report.tex"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let m = sa.metrics.unwrap();
    assert_eq!(m.ari, 1.0);
    assert_eq!(m.n, 19, "24 clips, first 5 go to tuning");
    let log = fs::read_to_string(a.path().join(LOG_FILE)).unwrap();
    for stage in ["ingest", "describe", "embed", "cluster", "representatives", "nouns", "detect", "anonymize", "report"] {
        assert!(log.lines().any(|l| l.starts_with(&format!("{stage}\t"))), "{stage} missing from log");
    }
    let clusters: ClustersFile = read_json(Stage::Cluster, &a.path().join(CLUSTERS_FILE)).unwrap();
    assert_eq!(clusters.representatives.len(), 3);
    for r in &clusters.representatives {
        assert_eq!(clusters.labels[r.description_index], r.cluster_id);
    }
    assert!(a.path().join("report/assets/cluster_00.png").is_file());
}

#[test]
fn auto_clustering_tunes_first() {
    let mut config = PipelineConfig::default();
    config.clustering = ClusteringChoice::Auto;
    let out = tempfile::tempdir().unwrap();
    let s = pipeline(config).run(&fixture(), out.path()).unwrap();
    assert_eq!(s.metrics.unwrap().ari, 1.0);
    let tsv = fs::read_to_string(out.path().join("report/grid_results.tsv")).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some(GRID_TSV_HEADER));
    assert_eq!(lines.count(), 2 * 3 * 19);
}

#[test]
fn anonymization_can_be_disabled() {
    let mut config = PipelineConfig::default();
    config.anonymize = false;
    let p = pipeline(config);
    let data = p.load(&fixture()).unwrap();
    let c = p.cluster(&data).unwrap();
    let s = p.representatives(&data.session, &data.descriptions, &c.partition).unwrap();
    let v = p.visuals(&data.session, &data.descriptions, &s).unwrap();
    assert!(v.values().all(|v| v.redactions.is_empty()));
    assert!(v.values().any(|v| !v.detections.is_empty()));
    assert!(p.log().lines().iter().any(|l| l.starts_with("anonymize\t-\tskipped")));
}

#[test]
fn unreachable_gateway_fails_in_describe() {
    let mut config = PipelineConfig::default();
    config.gateway.base_url = "http://127.0.0.1:9".into();
    config.gateway.timeout_ms = 2000;
    let gw = fieldscribe_core::gateway::GatewayClient::http(config.gateway.clone()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = Pipeline::new(config, gw).run(&fixture(), out.path()).unwrap_err();
    assert_eq!(err.stage(), Stage::Describe);
    assert!(matches!(
        err,
        fieldscribe_core::pipeline::PipelineError::Gateway {
            source: fieldscribe_core::gateway::GatewayError::Unreachable { .. },
            ..
        }
    ));
    assert!(out.path().join(LOG_FILE).is_file());
}
