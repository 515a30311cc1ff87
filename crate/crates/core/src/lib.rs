//! Tabular representation learning under distribution shift.
//!
//! The crate implements a complete pipeline: a contrastively pretrained
//! tabular encoder, detector-based splitting of a dataset into
//! in-distribution and out-of-distribution parts, Fisher-anchored continual
//! adaptation with update gating, and downstream linear probes evaluated
//! with F1 / RMSE.
//!
//! Modules follow the pipeline order:
//!
//! - [`nn`]: dense-network substrate (forward/backward, Adam, softmax).
//! - [`data`]: CSV ingestion, one-hot encoding, row normalization,
//!   feature corruption, index subsetting.
//! - [`contrastive`]: encoder + projection head pretraining with a
//!   temperature-scaled contrastive loss over corrupted views.
//! - [`oodsplit`]: proxy classifier plus OpenMax or temperature-scaled
//!   max-softmax detectors producing a disjoint in/OOD partition.
//! - [`continual`]: diagonal Fisher importance, quadratic parameter
//!   anchoring, update gating, replay-set construction, and adaptation.
//! - [`predictor`]: linear probes and the F1 / RMSE metrics.
//! - [`pipeline`]: staged, resumable orchestration driven by a config file.
//! - [`report`]: structured run reports and the human summary table.

pub mod contrastive;
pub mod continual;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod nn;
pub mod oodsplit;
pub mod pipeline;
pub mod predictor;
pub mod report;
pub mod seed;
pub mod synth;

pub use contrastive::{ContrastiveModel, PretrainConfig};
pub use continual::{AnchorState, ContinualConfig, FisherDiag, ReplaySets};
pub use data::{Dataset, NormKind, SchemaHint, TaskKind};
pub use error::{Error, Result};
pub use nn::{Activation, Adam, GradientSet, Network};
pub use oodsplit::{OodSplit, OpenMaxModel, ProxyClassifier, TemperatureModel};
pub use pipeline::RunConfig;
pub use predictor::{EvalResult, Head};
pub use report::RunReport;
