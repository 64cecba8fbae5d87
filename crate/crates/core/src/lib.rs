//! MADCluster: anomaly detection for multivariate time series by
//! clustering learned embeddings around an adaptive center.
//!
//! The pipeline is `timeseries` (load, normalize, window, synthesize) →
//! `embedder` (per-step features) → `single` / `multi` (cluster losses) →
//! `trainer` → `scoring` → `metrics`. Gradients come from the scalar
//! reverse-mode tape in `diff`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diff;
pub mod embedder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod multi;
pub mod optim;
pub mod scoring;
pub mod single;
pub mod timeseries;
pub mod trainer;

pub use embedder::{Embedder, EmbedderConfig, EmbedderKind};
pub use error::{DiffError, Error, Result};
pub use metrics::{evaluate, EvalConfig, EvalReport};
pub use model::{ClusterModel, ModelState};
pub use scoring::ScoreSeries;
pub use timeseries::{SynthSpec, TimeSeriesDataset};
pub use trainer::{ClusterMode, Objective, TrainConfig, TrainLog, TrainOutcome};
