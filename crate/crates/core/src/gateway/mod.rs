//! Client for the inference gateway: captioning, embeddings, detection,
//! segmentation and anonymization over a small JSON-over-HTTP protocol.
//!
//! The client talks to a [`Transport`]; [`HttpTransport`] reaches a real
//! server, [`MockTransport`] calls the deterministic [`MockBackend`]
//! in-process. At most `max_concurrent_requests` requests are in flight per
//! client regardless of how many threads share it.

mod http;
mod mock;
pub mod wire;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub use http::{HttpTransport, LoopbackServer};
pub use mock::{hash_to_sphere, MockBackend, MockFixture, MockTransport, MOCK_DIM, MOCK_SEED};

use crate::clustering::argmax_similarity;
use crate::config::GatewayConfig;
use crate::detection::{Detection, NormBox};
use crate::embedding::EmbeddingVector;
use crate::prompts::{PosTagger, PromptError};
use crate::rle::RleMask;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("gateway unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
    #[error("gateway returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gateway returned an empty caption")]
    EmptyCaption,
    #[error("embedding dimensions disagree: {0}")]
    DimMismatch(String),
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("malformed gateway reply from {endpoint}: {detail}")]
    Protocol { endpoint: String, detail: String },
}

impl GatewayError {
    fn protocol(endpoint: &str, detail: impl Into<String>) -> Self {
        Self::Protocol {
            endpoint: endpoint.to_string(),
            detail: detail.into(),
        }
    }
}

/// Moves a JSON request to an endpoint and returns the JSON reply.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, GatewayError>;
}

/// Counting admission gate.
struct Admission {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Frame path as sent on the wire.
fn frame_arg(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

#[derive(Clone)]
pub struct GatewayClient {
    transport: Arc<dyn Transport>,
    config: GatewayConfig,
    admission: Arc<Admission>,
}

impl GatewayClient {
    pub fn new(config: GatewayConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        config
            .validate()
            .map_err(|e| GatewayError::Precondition(e.to_string()))?;
        let admission = Arc::new(Admission::new(config.max_concurrent_requests));
        Ok(Self {
            transport,
            config,
            admission,
        })
    }

    /// HTTP client for `config.base_url`.
    pub fn http(config: GatewayConfig) -> Result<Self, GatewayError> {
        let transport = Arc::new(HttpTransport::new(&config.base_url, config.timeout()));
        Self::new(config, transport)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    fn call<Req: Serialize, Rep: DeserializeOwned>(&self, endpoint: &str, req: &Req) -> Result<Rep, GatewayError> {
        let body = serde_json::to_value(req).expect("request types serialize");
        let reply = {
            let _permit = self.admission.acquire();
            self.transport.post(endpoint, &body)?
        };
        serde_json::from_value(reply).map_err(|e| GatewayError::protocol(endpoint, e.to_string()))
    }

    /// One description for a sequence of frames.
    pub fn caption(&self, frames: &[PathBuf]) -> Result<String, GatewayError> {
        if frames.is_empty() {
            return Err(GatewayError::Precondition("caption needs at least one frame".into()));
        }
        if frames.len() > self.config.max_caption_frames {
            return Err(GatewayError::Precondition(format!(
                "{} frames exceed the caption batch cap of {}",
                frames.len(),
                self.config.max_caption_frames
            )));
        }
        let req = wire::CaptionRequest {
            model: self.config.caption_model.clone(),
            frames: frames.iter().map(|p| frame_arg(p)).collect(),
        };
        let rep: wire::CaptionReply = self.call(wire::CAPTION, &req)?;
        let text = rep.text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(GatewayError::EmptyCaption);
        }
        Ok(text)
    }

    /// Embeds texts in `space` (the text model id). Duplicate texts are sent
    /// once and their vector is shared.
    pub fn embed_texts(&self, texts: &[String], space: &str) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Precondition("no texts to embed".into()));
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(GatewayError::Precondition("cannot embed a blank text".into()));
        }
        let (unique, slots) = dedupe(texts);
        let req = wire::EmbedTextRequest {
            model: space.to_string(),
            texts: unique,
        };
        let rep: wire::EmbedTextReply = self.call(wire::EMBED_TEXT, &req)?;
        let vectors = unit_vectors(wire::EMBED_TEXT, space, rep.dim, rep.vectors, req.texts.len())?;
        Ok(slots.into_iter().map(|i| vectors[i].clone()).collect())
    }

    /// Embeds texts and frames into the joint space `space`.
    pub fn embed_joint(
        &self,
        texts: &[String],
        frames: &[PathBuf],
        space: &str,
    ) -> Result<(Vec<EmbeddingVector>, Vec<EmbeddingVector>), GatewayError> {
        if texts.is_empty() || frames.is_empty() {
            return Err(GatewayError::Precondition("joint embedding needs a text and a frame".into()));
        }
        let req = wire::EmbedJointRequest {
            model: space.to_string(),
            texts: texts.to_vec(),
            frames: frames.iter().map(|p| frame_arg(p)).collect(),
        };
        let rep: wire::EmbedJointReply = self.call(wire::EMBED_JOINT, &req)?;
        let t = unit_vectors(wire::EMBED_JOINT, space, rep.dim, rep.text_vectors, texts.len())?;
        let i = unit_vectors(wire::EMBED_JOINT, space, rep.dim, rep.image_vectors, frames.len())?;
        Ok((t, i))
    }

    /// Frame whose image embedding is closest to `text`, with the similarity.
    pub fn best_frame(&self, text: &str, candidates: &[PathBuf]) -> Result<(usize, f64), GatewayError> {
        let space = self.config.joint_embed_model.clone();
        let (t, imgs) = self.embed_joint(&[text.to_string()], candidates, &space)?;
        argmax_similarity(&t[0], &imgs).map_err(|e| GatewayError::DimMismatch(e.to_string()))
    }

    /// Open-vocabulary detection; replies are sorted by descending score.
    pub fn detect(&self, frame: &Path, prompts: &[String]) -> Result<Vec<Detection>, GatewayError> {
        check_prompts(prompts)?;
        let req = wire::DetectRequest {
            model: self.config.detect_model.clone(),
            frame: frame_arg(frame),
            prompts: prompts.to_vec(),
        };
        let rep: wire::DetectReply = self.call(wire::DETECT, &req)?;
        let mut out = Vec::with_capacity(rep.detections.len());
        for d in rep.detections {
            if !prompts.contains(&d.label) {
                return Err(GatewayError::protocol(wire::DETECT, format!("label `{}` is not a prompt", d.label)));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(GatewayError::protocol(wire::DETECT, format!("score {} outside [0, 1]", d.score)));
            }
            out.push(Detection {
                label: d.label,
                score: d.score,
                bbox: d.bbox,
                mask: None,
            });
        }
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(out)
    }

    /// One mask per box, all `width x height` of the frame.
    pub fn segment(&self, frame: &Path, boxes: &[NormBox]) -> Result<Vec<RleMask>, GatewayError> {
        if boxes.is_empty() {
            return Ok(Vec::new());
        }
        let req = wire::SegmentRequest {
            model: self.config.segment_model.clone(),
            frame: frame_arg(frame),
            boxes: boxes.to_vec(),
        };
        let rep: wire::SegmentReply = self.call(wire::SEGMENT, &req)?;
        if rep.masks.len() != boxes.len() {
            return Err(GatewayError::protocol(
                wire::SEGMENT,
                format!("{} masks for {} boxes", rep.masks.len(), boxes.len()),
            ));
        }
        rep.masks
            .into_iter()
            .map(|counts| {
                let m = RleMask {
                    width: rep.width,
                    height: rep.height,
                    counts,
                };
                m.decode().map_err(|e| GatewayError::protocol(wire::SEGMENT, e.to_string()))?;
                Ok(m)
            })
            .collect()
    }

    /// Privacy-sensitive regions to redact.
    pub fn anonymize(&self, frame: &Path) -> Result<Vec<NormBox>, GatewayError> {
        let req = wire::AnonymizeRequest { frame: frame_arg(frame) };
        let rep: wire::AnonymizeReply = self.call(wire::ANONYMIZE, &req)?;
        Ok(rep.boxes)
    }

    pub fn pos_tags(&self, text: &str) -> Result<Vec<(String, String)>, GatewayError> {
        let req = wire::PosRequest {
            model: self.config.pos_model.clone(),
            text: text.to_string(),
        };
        let rep: wire::PosReply = self.call(wire::POS, &req)?;
        Ok(rep.tokens.into_iter().map(|t| (t.text, t.tag)).collect())
    }
}

impl PosTagger for GatewayClient {
    fn tag(&self, text: &str) -> Result<Vec<(String, String)>, PromptError> {
        self.pos_tags(text).map_err(|e| PromptError::Tagger(e.to_string()))
    }
}

fn check_prompts(prompts: &[String]) -> Result<(), GatewayError> {
    if prompts.is_empty() {
        return Err(GatewayError::Precondition("no detection prompts".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for p in prompts {
        if p.trim().is_empty() || *p != p.to_lowercase() {
            return Err(GatewayError::Precondition(format!("prompt `{p}` must be non-empty and lower-case")));
        }
        if !seen.insert(p) {
            return Err(GatewayError::Precondition(format!("duplicate prompt `{p}`")));
        }
    }
    Ok(())
}

/// Unique texts in first-seen order and, per input, its slot among them.
fn dedupe(texts: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut unique = Vec::new();
    let slots = texts
        .iter()
        .map(|t| {
            *index.entry(t.as_str()).or_insert_with(|| {
                unique.push(t.clone());
                unique.len() - 1
            })
        })
        .collect();
    (unique, slots)
}

fn unit_vectors(
    endpoint: &str,
    space: &str,
    dim: usize,
    raw: Vec<Vec<f64>>,
    expected: usize,
) -> Result<Vec<EmbeddingVector>, GatewayError> {
    if raw.len() != expected {
        return Err(GatewayError::protocol(endpoint, format!("{} vectors for {expected} inputs", raw.len())));
    }
    raw.into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(GatewayError::DimMismatch(format!(
                    "{endpoint} declared dim {dim} but sent a {}-vector",
                    v.len()
                )));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let made = if (norm - 1.0).abs() <= 1e-12 {
                EmbeddingVector::from_unit(space, v)
            } else {
                EmbeddingVector::normalized(space, v)
            };
            made.map_err(|e| GatewayError::protocol(endpoint, e.to_string()))
        })
        .collect()
}

/// Runs `f` over `items` on up to `workers` threads; results keep input order.
pub fn fan_out<T, R, E, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R, E>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                let failed = r.is_err();
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
                if failed {
                    next.store(items.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut out = Vec::with_capacity(items.len());
    for slot in slots {
        match slot.into_inner().unwrap_or_else(|e| e.into_inner()) {
            Some(r) => out.push(r?),
            None => break,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedupe_keeps_first_order() {
        let texts: Vec<String> = ["b", "a", "b", "c", "a"].iter().map(|s| s.to_string()).collect();
        let (u, s) = dedupe(&texts);
        assert_eq!(u, ["b", "a", "c"]);
        assert_eq!(s, [0, 1, 0, 2, 1]);
    }

    #[test]
    fn prompt_preconditions() {
        let p = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(check_prompts(&p(&["car", "street"])).is_ok());
        assert!(check_prompts(&p(&[])).is_err());
        assert!(check_prompts(&p(&["car", "car"])).is_err());
        assert!(check_prompts(&p(&["Car"])).is_err());
    }

    #[test]
    fn fan_out_preserves_order_and_stops_on_error() {
        let items: Vec<u32> = (0..50).collect();
        let out: Result<Vec<u32>, ()> = fan_out(&items, 4, |x| Ok(x * 2));
        assert_eq!(out.unwrap(), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        let err: Result<Vec<u32>, u32> = fan_out(&items, 3, |&x| if x == 7 { Err(x) } else { Ok(x) });
        assert_eq!(err, Err(7));
        let empty: Result<Vec<u32>, ()> = fan_out(&[] as &[u32], 4, |x| Ok(*x));
        assert!(empty.unwrap().is_empty());
    }
}
