//! Benchmark engine for multiple-instance-learning slide classification under
//! acquisition-center shift.
//!
//! The crate works on pre-extracted patch-feature bags. It provides
//!
//! - [`feature_store`]: the bag/dataset model, the binary bag format, manifest
//!   ingestion and a seeded synthetic generator with a center-bias knob;
//! - [`tsne`]: exact t-SNE used to project slide embeddings to 2-D;
//! - [`shift_metrics`]: silhouette coefficient, the silhouette-on-t-SNE center
//!   shift score (FM-SI) and the k-NN robustness index (RI);
//! - [`mil`]: attention MIL (ABMIL) with hand-written backprop, AdamW and a
//!   cosine schedule, plus the MI-SimpleShot prototype classifier;
//! - [`harness`]: stratified cross-validation, balanced accuracy, correlation
//!   statistics, the bundled reference table and report assembly.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod feature_store;
pub mod harness;
pub mod linalg;
pub mod mil;
pub mod shift_metrics;
pub mod tsne;

pub use error::{Error, Result};
pub use feature_store::{Dataset, FeatureBag, SlideEmbedding, SynthConfig};
pub use harness::{BenchConfig, BenchOutcome, BenchReport, FoldSplit, ModelStatsRow};
pub use linalg::Matrix;
pub use mil::{AbmilParams, Prototypes, SimpleShotConfig, TrainConfig};
pub use shift_metrics::{FmsiResult, RiResult};
pub use tsne::{Embedding2D, TsneConfig};
