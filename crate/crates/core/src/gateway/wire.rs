//! Request and reply bodies of the `/v1/*` endpoints.

use serde::{Deserialize, Serialize};

use crate::detection::NormBox;

pub const CAPTION: &str = "/v1/caption";
pub const EMBED_TEXT: &str = "/v1/embed_text";
pub const EMBED_JOINT: &str = "/v1/embed_joint";
pub const DETECT: &str = "/v1/detect";
pub const SEGMENT: &str = "/v1/segment";
pub const ANONYMIZE: &str = "/v1/anonymize";
pub const POS: &str = "/v1/pos";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub model: String,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionReply {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub model: String,
    pub texts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextReply {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedJointRequest {
    pub model: String,
    pub texts: Vec<String>,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedJointReply {
    pub dim: usize,
    pub text_vectors: Vec<Vec<f64>>,
    pub image_vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub model: String,
    pub frame: String,
    pub prompts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub label: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: NormBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectReply {
    pub detections: Vec<WireDetection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub model: String,
    pub frame: String,
    pub boxes: Vec<NormBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReply {
    pub width: u32,
    pub height: u32,
    /// COCO run lengths, one list per requested box.
    pub masks: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnonymizeRequest {
    pub frame: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnonymizeReply {
    pub boxes: Vec<NormBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosRequest {
    #[serde(default)]
    pub model: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosToken {
    pub text: String,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosReply {
    pub tokens: Vec<PosToken>,
}
