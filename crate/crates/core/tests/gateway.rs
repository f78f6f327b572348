use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use fieldscribe_core::config::GatewayConfig;
use fieldscribe_core::detection::NormBox;
use fieldscribe_core::gateway::{
    fan_out, hash_to_sphere, GatewayClient, GatewayError, LoopbackServer, MockBackend, MockTransport, Transport,
};
use fieldscribe_core::rle::BinaryMask;

fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic-a")
}

fn backend() -> Arc<MockBackend> {
    let mut b = MockBackend::default();
    b.register_root(&fixture_root()).unwrap();
    Arc::new(b)
}

fn client_with(backend: Arc<MockBackend>, max: usize) -> (GatewayClient, Arc<MockTransport>) {
    let transport = Arc::new(MockTransport::new(backend));
    let config = GatewayConfig {
        max_concurrent_requests: max,
        ..GatewayConfig::default()
    };
    (GatewayClient::new(config, transport.clone()).unwrap(), transport)
}

fn frame(name: &str) -> PathBuf {
    fixture_root().join("frames").join(name)
}

#[test]
fn hash_sphere_matches_reference_vectors() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/oracles/hash_sphere.json"))
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for case in v["cases"].as_array().unwrap() {
        let expected: Vec<f64> = serde_json::from_value(case["vector"].clone()).unwrap();
        let got = hash_to_sphere(
            case["seed"].as_u64().unwrap(),
            case["space"].as_str().unwrap(),
            case["text"].as_str().unwrap(),
            case["dim"].as_u64().unwrap() as usize,
        );
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }
}

#[test]
fn street_frames_get_the_street_sentence() {
    let (c, _) = client_with(backend(), 2);
    let text = c.caption(&[frame("c00_f00.png"), frame("c00_f01.png")]).unwrap();
    assert_eq!(
        text,
        "A street with cars parked on the side and a few pedestrians walking on the sidewalk."
    );
    assert_eq!(c.caption(&[frame("c01_f00.png")]).unwrap(), "A cyclist is riding down a city street.");
}

#[test]
fn caption_preconditions_and_errors() {
    let (c, _) = client_with(backend(), 2);
    assert!(matches!(c.caption(&[]), Err(GatewayError::Precondition(_))));
    assert!(matches!(
        c.caption(&[frame("missing.png")]),
        Err(GatewayError::Status { status: 404, .. })
    ));
}

#[test]
fn unreachable_gateway() {
    let config = GatewayConfig {
        base_url: "http://127.0.0.1:9".into(),
        timeout_ms: 2_000,
        ..GatewayConfig::default()
    };
    let c = GatewayClient::http(config).unwrap();
    assert!(matches!(c.caption(&[frame("c00_f00.png")]), Err(GatewayError::Unreachable { .. })));
}

#[test]
fn text_embeddings_are_unit_and_deduplicated() {
    let (c, t) = client_with(backend(), 2);
    let texts: Vec<String> = ["same", "other", "same"].iter().map(|s| s.to_string()).collect();
    let v = c.embed_texts(&texts, "all-MiniLM-L6-v2").unwrap();
    assert_eq!(v.len(), 3);
    assert_eq!(v[0], v[2]);
    assert!(v.iter().all(|e| (e.norm() - 1.0).abs() < 1e-6 && e.space_id() == "all-MiniLM-L6-v2"));
    assert_eq!(t.requests(), 1);
    assert_eq!(v[1].values(), hash_to_sphere(0x5EED, "all-MiniLM-L6-v2", "other", 128).as_slice());
    assert!(matches!(c.embed_texts(&[], "s"), Err(GatewayError::Precondition(_))));
    assert!(matches!(c.embed_texts(&[" ".into()], "s"), Err(GatewayError::Precondition(_))));
}

#[test]
fn joint_matching_is_exact_on_the_fixture() {
    let (c, _) = client_with(backend(), 2);
    let captions = [
        "A street with cars parked on the side and a few pedestrians walking on the sidewalk.",
        "A cyclist is riding down a city street.",
        "A street with a bus stop and a building with flags.",
    ];
    let frames = [frame("c00_f03.png"), frame("c01_f03.png"), frame("c02_f03.png")];
    for (i, cap) in captions.iter().enumerate() {
        let (best, sim) = c.best_frame(cap, &frames).unwrap();
        assert_eq!(best, i, "{cap}");
        assert!((-1.0..=1.0).contains(&sim));
        assert!(sim > 0.99);
    }
}

#[test]
fn detection_returns_authored_boxes() {
    let (c, _) = client_with(backend(), 2);
    let prompts = vec!["street".to_string(), "car".to_string()];
    let d = c.detect(&frame("c00_f00.png"), &prompts).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].label, "car");
    assert_eq!(d[0].score, 0.9);
    assert_eq!(d[0].bbox.coords(), [0.08, 0.55, 0.45, 0.85]);
    assert!(c.detect(&frame("c00_f00.png"), &["zebra".into()]).unwrap().is_empty());
    assert!(matches!(
        c.detect(&frame("c00_f00.png"), &["car".into(), "car".into()]),
        Err(GatewayError::Precondition(_))
    ));
}

#[test]
fn segmentation_mask_is_the_box_interior() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.png");
    image::RgbImage::new(64, 64).save(&path).unwrap();
    let (c, _) = client_with(Arc::new(MockBackend::default()), 1);
    let b = NormBox::new(10.0 / 64.0, 10.0 / 64.0, 20.0 / 64.0, 30.0 / 64.0).unwrap();
    let degenerate = NormBox::new(0.5, 0.1, 0.5, 0.9).unwrap();
    let masks = c.segment(&path, &[b, degenerate]).unwrap();
    assert_eq!(masks[0].decode().unwrap(), BinaryMask::from_rect(64, 64, 10, 10, 20, 30));
    assert_eq!(masks[1].decode().unwrap().area(), 0);
    assert!(c.segment(&path, &[]).unwrap().is_empty());
}

#[test]
fn anonymization_boxes() {
    let (c, _) = client_with(backend(), 2);
    let boxes = c.anonymize(&frame("c00_f00.png")).unwrap();
    assert_eq!(boxes[0].coords(), [0.6, 0.31, 0.72, 0.48]);
    assert!(c.anonymize(&frame("c01_f00.png")).unwrap().is_empty());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not a png").unwrap();
    assert!(matches!(c.anonymize(&junk), Err(GatewayError::Status { .. })));
}

#[test]
fn in_flight_requests_respect_the_bound() {
    for max in [1, 3] {
        let transport = Arc::new(MockTransport::new(backend()).with_delay(Duration::from_millis(15)));
        let config = GatewayConfig {
            max_concurrent_requests: max,
            ..GatewayConfig::default()
        };
        let c = GatewayClient::new(config, transport.clone()).unwrap();
        let items: Vec<usize> = (0..24).collect();
        fan_out(&items, 8, |i| c.caption(&[frame(&format!("c{i:02}_f00.png"))])).unwrap();
        assert_eq!(transport.requests(), 24);
        assert!(transport.max_in_flight() <= max, "{} > {max}", transport.max_in_flight());
        assert_eq!(transport.max_in_flight(), max);
    }
}

#[test]
fn loopback_matches_in_process() {
    let b = backend();
    let server = LoopbackServer::start(b.clone()).unwrap();
    let config = GatewayConfig {
        base_url: server.url().to_string(),
        ..GatewayConfig::default()
    };
    let http = GatewayClient::http(config).unwrap();
    let (local, _) = client_with(b.clone(), 2);
    let frames = vec![frame("c02_f00.png")];
    assert_eq!(http.caption(&frames).unwrap(), local.caption(&frames).unwrap());
    let texts = vec!["A cyclist is riding down a city street.".to_string()];
    assert_eq!(http.embed_texts(&texts, "m").unwrap(), local.embed_texts(&texts, "m").unwrap());
    assert_eq!(
        http.detect(&frames[0], &["bus".into(), "flag".into()]).unwrap(),
        local.detect(&frames[0], &["bus".into(), "flag".into()]).unwrap()
    );
    match http.caption(&[frame("missing.png")]) {
        Err(GatewayError::Status { status: 404, .. }) => {}
        other => panic!("{other:?}"),
    }

    let raw = MockTransport::new(b);
    let body = serde_json::json!({"model": "m", "texts": ["x"]});
    assert_eq!(
        raw.post("/v1/embed_text", &body).unwrap(),
        raw.post("/v1/embed_text", &body).unwrap()
    );
}
