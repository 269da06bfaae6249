//! Demographic bias audits for image-text embedding models.
//!
//! For each role prompt the engine retrieves the `k` most similar labeled
//! face images by exact cosine similarity, measures the gender, race and age
//! composition of the retrieved set, scores each composition against a
//! uniform baseline with the Jensen-Shannon divergence, and compares the
//! results across models.
//!
//! Modules map onto the pipeline:
//!
//! - [`corpus`]: embedding files, manifests, labels, taxonomy, prompts and
//!   synthetic planted-bias bundles
//! - [`retrieval`]: normalization and exact top-k search
//! - [`metrics`]: probability vectors, KL and Jensen-Shannon divergence
//! - [`analysis`]: cross-model averages, skew flags, volatility, intersections
//! - [`audit`], [`report`], [`config`], [`validate`]: orchestration and outputs

pub mod analysis;
pub mod audit;
pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod report;
pub mod retrieval;
pub mod validate;

pub use error::{Error, ErrorClass, Result};
