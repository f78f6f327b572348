//! Deterministic stand-in for the inference gateway.
//!
//! Replies are a pure function of the endpoint, the request and the seed.
//! Annotations come from `mock_fixture.json` files next to registered
//! session roots: each annotated frame names a scene group and a caption
//! variant, plus authored object boxes and sensitive regions.
//!
//! Embeddings: a text is hashed onto the unit sphere. A canned caption of
//! group `g` is instead its group anchor plus a small hashed offset, so
//! captions of one group sit close together. A frame of group `g` is the
//! vector of its caption plus hashed noise of norm 0.05, renormalized.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::wire;
use super::{GatewayError, Transport};
use crate::detection::NormBox;
use crate::prompts::heuristic_pos_tags;
use crate::rle::{BinaryMask, RleMask};

pub const MOCK_SEED: u64 = 0x5EED;
pub const MOCK_DIM: usize = 128;
pub const MOCK_FIXTURE_FILE: &str = "mock_fixture.json";

const CAPTION_OFFSET: f64 = 0.04;
const FRAME_NOISE: f64 = 0.05;
const GENERIC_CAPTION: &str = "An outdoor scene recorded by the robot.";

/// Uniform in (0, 1) stream derived from SHA-256 in counter mode.
struct HashStream {
    prefix: Vec<u8>,
    counter: u32,
    buf: [u64; 4],
    pos: usize,
}

impl HashStream {
    fn new(seed: u64, space: &str, text: &str) -> Self {
        let mut prefix = Vec::with_capacity(16 + space.len() + text.len());
        prefix.extend_from_slice(&seed.to_le_bytes());
        prefix.extend_from_slice(&(space.len() as u32).to_le_bytes());
        prefix.extend_from_slice(space.as_bytes());
        prefix.extend_from_slice(&(text.len() as u32).to_le_bytes());
        prefix.extend_from_slice(text.as_bytes());
        Self {
            prefix,
            counter: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    fn next_uniform(&mut self) -> f64 {
        if self.pos == 4 {
            let mut h = Sha256::new();
            h.update(&self.prefix);
            h.update(self.counter.to_le_bytes());
            let digest = h.finalize();
            for (i, chunk) in digest.chunks_exact(8).enumerate() {
                self.buf[i] = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
            self.counter += 1;
            self.pos = 0;
        }
        let w = self.buf[self.pos];
        self.pos += 1;
        ((w >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }
}

/// Unit vector determined by `(seed, space, text)`: Box-Muller normals
/// from a SHA-256 counter stream, L2-normalized.
pub fn hash_to_sphere(seed: u64, space: &str, text: &str, dim: usize) -> Vec<f64> {
    let mut stream = HashStream::new(seed, space, text);
    let mut out = Vec::with_capacity(dim + 1);
    while out.len() < dim {
        let u1 = stream.next_uniform();
        let u2 = stream.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = 2.0 * std::f64::consts::PI * u2;
        out.push(r * a.cos());
        out.push(r * a.sin());
    }
    out.truncate(dim);
    normalize(out)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= n;
    }
    v
}

fn perturb(base: &[f64], noise: &[f64], scale: f64) -> Vec<f64> {
    normalize(base.iter().zip(noise).map(|(b, n)| b + scale * n).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub version: u32,
    pub groups: BTreeMap<String, MockGroup>,
    pub frames: BTreeMap<String, MockFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockGroup {
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockFrame {
    pub group: String,
    #[serde(default)]
    pub variant: usize,
    #[serde(default)]
    pub objects: Vec<wire::WireDetection>,
    #[serde(default)]
    pub sensitive: Vec<NormBox>,
}

type Reply = Result<Value, (u16, String)>;

fn bad_request(e: impl std::fmt::Display) -> (u16, String) {
    (400, e.to_string())
}

#[derive(Clone, Debug)]
pub struct MockBackend {
    seed: u64,
    dim: usize,
    roots: Vec<(PathBuf, Arc<MockFixture>)>,
    caption_groups: HashMap<String, String>,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(MOCK_SEED)
    }
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            dim: MOCK_DIM,
            roots: Vec::new(),
            caption_groups: HashMap::new(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim.max(1);
        self
    }

    /// Registers a session directory; its `mock_fixture.json` is read when
    /// present. Frames under unregistered roots are served unannotated.
    pub fn register_root(&mut self, root: &Path) -> Result<(), GatewayError> {
        let path = root.join(MOCK_FIXTURE_FILE);
        let fixture = if path.exists() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| GatewayError::Precondition(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| GatewayError::Precondition(format!("{}: {e}", path.display())))?
        } else {
            MockFixture::default()
        };
        self.add_fixture(root, fixture);
        Ok(())
    }

    pub fn add_fixture(&mut self, root: &Path, fixture: MockFixture) {
        for (name, g) in &fixture.groups {
            for c in &g.captions {
                self.caption_groups.entry(c.clone()).or_insert_with(|| name.clone());
            }
        }
        let root = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
        self.roots.push((root, Arc::new(fixture)));
    }

    fn annotation(&self, frame: &Path) -> Option<(&MockFixture, &MockFrame)> {
        let frame = frame.canonicalize().unwrap_or_else(|_| frame.to_path_buf());
        self.roots.iter().find_map(|(root, fx)| {
            let rel = frame.strip_prefix(root).ok()?;
            let key = rel.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/");
            fx.frames.get(&key).map(|f| (fx.as_ref(), f))
        })
    }

    fn frame_key(&self, frame: &Path) -> String {
        let canon = frame.canonicalize().unwrap_or_else(|_| frame.to_path_buf());
        for (root, _) in &self.roots {
            if let Ok(rel) = canon.strip_prefix(root) {
                return rel.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/");
            }
        }
        canon.to_string_lossy().into_owned()
    }

    fn caption_of(&self, fx: &MockFixture, f: &MockFrame) -> Option<String> {
        let caps = &fx.groups.get(&f.group)?.captions;
        caps.get(f.variant % caps.len().max(1)).cloned()
    }

    fn existing(&self, frame: &str) -> Result<PathBuf, (u16, String)> {
        let p = PathBuf::from(frame);
        if p.is_file() {
            Ok(p)
        } else {
            Err((404, format!("frame not found: {frame}")))
        }
    }

    /// Text embedding in `space`.
    pub fn text_vector(&self, space: &str, text: &str) -> Vec<f64> {
        let h = hash_to_sphere(self.seed, space, text, self.dim);
        match self.caption_groups.get(text) {
            Some(group) => {
                let anchor = hash_to_sphere(self.seed, space, &format!("\u{0}group\u{0}{group}"), self.dim);
                perturb(&anchor, &h, CAPTION_OFFSET)
            }
            None => h,
        }
    }

    /// Image embedding in `space`.
    pub fn image_vector(&self, space: &str, frame: &Path) -> Vec<f64> {
        let noise = hash_to_sphere(self.seed, space, &format!("\u{0}frame\u{0}{}", self.frame_key(frame)), self.dim);
        match self.annotation(frame).and_then(|(fx, f)| self.caption_of(fx, f)) {
            Some(caption) => perturb(&self.text_vector(space, &caption), &noise, FRAME_NOISE),
            None => noise,
        }
    }

    /// Serves one request.
    pub fn handle(&self, endpoint: &str, body: &Value) -> Reply {
        match endpoint {
            wire::CAPTION => self.caption(body),
            wire::EMBED_TEXT => self.embed_text(body),
            wire::EMBED_JOINT => self.embed_joint(body),
            wire::DETECT => self.detect(body),
            wire::SEGMENT => self.segment(body),
            wire::ANONYMIZE => self.anonymize(body),
            wire::POS => self.pos(body),
            other => Err((404, format!("unknown endpoint {other}"))),
        }
    }

    fn caption(&self, body: &Value) -> Reply {
        let req: wire::CaptionRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        if req.frames.is_empty() {
            return Err(bad_request("no frames"));
        }
        for f in &req.frames {
            self.existing(f)?;
        }
        let text = self
            .annotation(Path::new(&req.frames[0]))
            .and_then(|(fx, f)| self.caption_of(fx, f))
            .unwrap_or_else(|| GENERIC_CAPTION.to_string());
        Ok(serde_json::to_value(wire::CaptionReply { text }).expect("serializes"))
    }

    fn embed_text(&self, body: &Value) -> Reply {
        let req: wire::EmbedTextRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        if req.texts.is_empty() {
            return Err(bad_request("no texts"));
        }
        let vectors = req.texts.iter().map(|t| self.text_vector(&req.model, t)).collect();
        Ok(serde_json::to_value(wire::EmbedTextReply { dim: self.dim, vectors }).expect("serializes"))
    }

    fn embed_joint(&self, body: &Value) -> Reply {
        let req: wire::EmbedJointRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        if req.texts.is_empty() || req.frames.is_empty() {
            return Err(bad_request("need texts and frames"));
        }
        let mut image_vectors = Vec::with_capacity(req.frames.len());
        for f in &req.frames {
            let p = self.existing(f)?;
            image_vectors.push(self.image_vector(&req.model, &p));
        }
        let text_vectors = req.texts.iter().map(|t| self.text_vector(&req.model, t)).collect();
        Ok(serde_json::to_value(wire::EmbedJointReply {
            dim: self.dim,
            text_vectors,
            image_vectors,
        })
        .expect("serializes"))
    }

    fn detect(&self, body: &Value) -> Reply {
        let req: wire::DetectRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        let p = self.existing(&req.frame)?;
        let mut detections: Vec<wire::WireDetection> = self
            .annotation(&p)
            .map(|(_, f)| f.objects.iter().filter(|o| req.prompts.contains(&o.label)).cloned().collect())
            .unwrap_or_default();
        detections.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(serde_json::to_value(wire::DetectReply { detections }).expect("serializes"))
    }

    fn segment(&self, body: &Value) -> Reply {
        let req: wire::SegmentRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        let p = self.existing(&req.frame)?;
        let (width, height) = image::image_dimensions(&p).map_err(|e| (422, format!("unreadable frame: {e}")))?;
        let masks = req
            .boxes
            .iter()
            .map(|b| {
                let r = b.to_pixels(width, height);
                RleMask::encode(&BinaryMask::from_rect(width, height, r.x0, r.y0, r.x1, r.y1)).counts
            })
            .collect();
        Ok(serde_json::to_value(wire::SegmentReply { width, height, masks }).expect("serializes"))
    }

    fn anonymize(&self, body: &Value) -> Reply {
        let req: wire::AnonymizeRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        let p = self.existing(&req.frame)?;
        image::image_dimensions(&p).map_err(|e| (422, format!("unreadable frame: {e}")))?;
        let boxes = self.annotation(&p).map(|(_, f)| f.sensitive.clone()).unwrap_or_default();
        Ok(serde_json::to_value(wire::AnonymizeReply { boxes }).expect("serializes"))
    }

    fn pos(&self, body: &Value) -> Reply {
        let req: wire::PosRequest = serde_json::from_value(body.clone()).map_err(bad_request)?;
        let tokens = heuristic_pos_tags(&req.text)
            .into_iter()
            .map(|(text, tag)| wire::PosToken { text, tag })
            .collect();
        Ok(serde_json::to_value(wire::PosReply { tokens }).expect("serializes"))
    }
}

/// In-process transport to a [`MockBackend`] that records how many requests
/// were in flight at once.
pub struct MockTransport {
    backend: Arc<MockBackend>,
    delay: Option<Duration>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    requests: AtomicUsize,
}

impl MockTransport {
    pub fn new(backend: Arc<MockBackend>) -> Self {
        Self {
            backend,
            delay: None,
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        }
    }

    /// Holds every request for `delay`, making overlap observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, GatewayError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.requests.fetch_add(1, Ordering::SeqCst);
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let reply = self.backend.handle(endpoint, body);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply.map_err(|(status, body)| GatewayError::Status { status, body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_is_unit_and_deterministic() {
        let a = hash_to_sphere(MOCK_SEED, "s", "hello", 64);
        assert_eq!(a, hash_to_sphere(MOCK_SEED, "s", "hello", 64));
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_ne!(a, hash_to_sphere(MOCK_SEED, "t", "hello", 64));
        assert_ne!(a, hash_to_sphere(MOCK_SEED + 1, "s", "hello", 64));
        assert_eq!(hash_to_sphere(MOCK_SEED, "s", "x", 3).len(), 3);
    }

    #[test]
    fn canned_captions_cluster_by_group() {
        let mut b = MockBackend::default();
        let mut groups = BTreeMap::new();
        groups.insert("a".to_string(), MockGroup { captions: vec!["one".into(), "uno".into()] });
        groups.insert("b".to_string(), MockGroup { captions: vec!["two".into()] });
        b.add_fixture(Path::new("/nonexistent"), MockFixture { version: 1, groups, frames: BTreeMap::new() });
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let one = b.text_vector("s", "one");
        let uno = b.text_vector("s", "uno");
        let two = b.text_vector("s", "two");
        assert!(1.0 - dot(&one, &uno) < 0.01);
        assert!(1.0 - dot(&one, &two) > 0.5);
        assert_eq!(b.text_vector("s", "free text"), hash_to_sphere(MOCK_SEED, "s", "free text", MOCK_DIM));
    }

    #[test]
    fn unknown_endpoint_is_404() {
        let b = MockBackend::default();
        assert_eq!(b.handle("/v1/nope", &Value::Null).unwrap_err().0, 404);
        assert_eq!(b.handle(wire::CAPTION, &serde_json::json!({"model": "m"})).unwrap_err().0, 400);
    }
}
