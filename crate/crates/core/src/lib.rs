//! fieldscribe-core: turns recorded robot sessions into clustered,
//! geo-referenced reports.
//!
//! The crate is organised along the pipeline:
//!
//! * [`session`]: on-disk session format, frame sampling, pose interpolation
//! * [`gateway`]: JSON-over-HTTP inference client and a deterministic mock
//! * [`clustering`]: threshold agglomerative clustering of description embeddings
//! * [`metrics`]: ARI / NMI / FMI against a ground-truth labeling
//! * [`prompts`]: noun prompts for open-vocabulary detection
//! * [`tuning`]: chronological split and exhaustive hyperparameter grid
//! * [`report`]: report model, overlays, maps and Markdown/HTML/LaTeX emitters
//! * [`pipeline`]: stage driver used by the `fieldscribe` binary
//!
//! Modules that touch the network, images or threads live behind the
//! `native` feature so the numeric core also builds for `wasm32`.

pub mod clustering;
pub mod config;
pub mod detection;
pub mod embedding;
pub mod metrics;
pub mod palette;
pub mod prompts;
pub mod rle;
pub mod session;
pub mod time;
pub mod tuning;

#[cfg(feature = "native")]
pub mod gateway;
#[cfg(feature = "native")]
pub mod pipeline;
#[cfg(feature = "native")]
pub mod report;

pub use clustering::{ClusterParams, Linkage, Metric, Partition};
pub use embedding::EmbeddingVector;
pub use session::{Clip, Domain, GeoPose, SceneDescription, SessionManifest};
pub use time::Timestamp;
