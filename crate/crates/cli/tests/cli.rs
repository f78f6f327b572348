use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic-a")
}

fn fieldscribe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fieldscribe"))
        .args(args)
        .env_remove("FIELDSCRIBE_GATEWAY_URL")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Copies the fixture so tests can corrupt it.
fn copy_fixture(to: &Path) {
    for entry in walk(&fixture()) {
        let rel = entry.strip_prefix(fixture()).unwrap();
        let dst = to.join(rel);
        fs::create_dir_all(dst.parent().unwrap()).unwrap();
        fs::copy(&entry, &dst).unwrap();
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn ingest_exit_codes() {
    let ok = fieldscribe(&["ingest", s(&fixture())]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("24 clips"));

    let tmp = tempfile::tempdir().unwrap();
    copy_fixture(tmp.path());
    fs::write(tmp.path().join("manifest.json"), r#"{"session_id": "x", "clips": 3}"#).unwrap();
    let bad = fieldscribe(&["ingest", s(tmp.path())]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("schema violation"));

    let missing = fieldscribe(&["ingest", "/nonexistent/session"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&fieldscribe(&["frobnicate"])), 2);
    assert_eq!(code(&fieldscribe(&["run"])), 2);
    let bad_format = fieldscribe(&["run", s(&fixture()), "--mock", "--format", "pdf"]);
    assert_eq!(code(&bad_format), 2);
    assert_eq!(code(&fieldscribe(&["--help"])), 0);
}

#[test]
fn run_twice_is_byte_identical_in_three_formats() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for out in [a.path(), b.path()] {
        let o = fieldscribe(&["run", s(&fixture()), "--mock", "--seed", "42", "--out", s(out), "--format", "md,html,tex"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["report/report.md", "report/report.html", "report/report.tex", "report/map.geojson", "clusters.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(a.path().join("pipeline.log").is_file());
}

#[test]
fn gateway_down_exits_1() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("config.json");
    fs::write(&cfg, r#"{"gateway": {"base_url": "http://127.0.0.1:9", "timeout_ms": 2000}}"#).unwrap();
    let o = fieldscribe(&["run", s(&fixture()), "--config", s(&cfg), "--out", s(out.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unreachable"), "{}", stderr(&o));
}

#[test]
fn gateway_url_comes_from_the_environment() {
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fieldscribe"))
        .args(["describe", s(&fixture()), "--out", s(out.path())])
        .env("FIELDSCRIBE_GATEWAY_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("127.0.0.1:9"), "{}", stderr(&o));
}

#[test]
fn config_typos_are_usage_errors() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("config.json");
    fs::write(&cfg, r#"{"gateway": {"base_ulr": "http://x"}}"#).unwrap();
    let o = fieldscribe(&["run", s(&fixture()), "--mock", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("gateway.base_ulr"), "{}", stderr(&o));
}

#[test]
fn stages_chain_through_the_output_directory() {
    let out = tempfile::tempdir().unwrap();
    let o = s(out.path());
    for cmd in ["describe", "embed", "cluster", "report"] {
        let r = fieldscribe(&[cmd, s(&fixture()), "--mock", "--out", o, "--format", "md"]);
        assert_eq!(code(&r), 0, "{cmd}: {}", stderr(&r));
    }
    for f in ["descriptions.jsonl", "embeddings.json", "clusters.json", "report/report.md", "report/metrics.json"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    // Same clustering as the one-shot run.
    let full = tempfile::tempdir().unwrap();
    assert_eq!(code(&fieldscribe(&["run", s(&fixture()), "--mock", "--out", s(full.path())])), 0);
    assert_eq!(
        fs::read(out.path().join("clusters.json")).unwrap(),
        fs::read(full.path().join("clusters.json")).unwrap()
    );
    assert_eq!(
        fs::read(out.path().join("report/report.md")).unwrap(),
        fs::read(full.path().join("report/report.md")).unwrap()
    );
}

#[test]
fn evaluate_identical_labels_and_malformed_truth() {
    let out = tempfile::tempdir().unwrap();
    let r = fieldscribe(&["cluster", s(&fixture()), "--mock", "--out", s(out.path())]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let clusters = out.path().join("clusters.json");
    let labels = serde_json::from_str::<serde_json::Value>(&fs::read_to_string(&clusters).unwrap()).unwrap()["labels"].clone();
    let truth = out.path().join("truth.json");
    fs::write(&truth, serde_json::json!({"annotator_id": "a", "labels": labels}).to_string()).unwrap();
    let e = fieldscribe(&["evaluate", s(&clusters), s(&truth), "--out", s(out.path())]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["ari"], 1.0);
    assert_eq!(m["nmi_arithmetic"], 1.0);
    assert_eq!(m["fmi"], 1.0);
    assert_eq!(m["n"], 24);

    fs::write(&truth, r#"{"annotator_id": "a", "labels": "nope"}"#).unwrap();
    let bad = fieldscribe(&["evaluate", s(&clusters), s(&truth), "--out", s(out.path())]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("schema violation"), "{}", stderr(&bad));

    fs::write(&truth, r#"{"annotator_id": "a", "labels": [0, 1]}"#).unwrap();
    let short = fieldscribe(&["evaluate", s(&clusters), s(&truth), "--out", s(out.path())]);
    assert_eq!(code(&short), 1);
}

#[test]
fn tune_writes_the_full_grid() {
    let out = tempfile::tempdir().unwrap();
    let r = fieldscribe(&["tune", s(&fixture()), "--mock", "--out", s(out.path())]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let tsv = fs::read_to_string(out.path().join("grid_results.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 2 * 3 * 19);
    let best: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("best_params.json")).unwrap()).unwrap();
    assert_eq!(best["ari"], 1.0);

    let grid = out.path().join("grid.json");
    fs::write(&grid, r#"{"metrics": ["cosine"], "thresholds": [0.1, 0.5], "linkages": ["single"]}"#).unwrap();
    let r = fieldscribe(&["tune", s(&fixture()), "--mock", "--grid", s(&grid), "--out", s(out.path())]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(fs::read_to_string(out.path().join("grid_results.tsv")).unwrap().lines().count(), 3);
}

#[test]
fn no_anonymize_warns() {
    let out = tempfile::tempdir().unwrap();
    let r = fieldscribe(&["run", s(&fixture()), "--mock", "--no-anonymize", "--out", s(out.path())]);
    assert_eq!(code(&r), 0);
    assert!(stderr(&r).contains("anonymization is disabled"));
    assert!(!fs::read_to_string(out.path().join("report/report.md")).unwrap().contains("pixelated"));
}

#[test]
fn tiles_only_with_the_flag() {
    let out = tempfile::tempdir().unwrap();
    let o = s(out.path());
    assert_eq!(code(&fieldscribe(&["run", s(&fixture()), "--mock", "--format", "html", "--out", o])), 0);
    let html = fs::read_to_string(out.path().join("report/report.html")).unwrap();
    assert!(!html.contains("openstreetmap"));
    assert_eq!(
        code(&fieldscribe(&["run", s(&fixture()), "--mock", "--format", "html", "--allow-tiles", "--out", o])),
        0
    );
    let html = fs::read_to_string(out.path().join("report/report.html")).unwrap();
    assert!(html.contains("tile.openstreetmap.org"));
}
