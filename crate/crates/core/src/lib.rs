//! Two-stage stroke technique recognition for racket-sport rallies.
//!
//! The input boundary is a [`FrameFeatureSeries`]: one feature vector per
//! video frame, produced by any upstream backbone. From there:
//!
//! 1. [`event_signal`] learns a per-frame stroke probability, turns it into
//!    stroke events and cuts one segment per stroke.
//! 2. [`classifier`] labels each segment; its logits are fused with a
//!    technique-transition prior held by [`graph`], which is adapted during
//!    training whenever the fused prediction is wrong.
//! 3. [`pipeline`] ties both stages together for training, inference and
//!    model persistence.
//!
//! [`metrics`] scores predicted segmentations, [`tactics`] mines
//! three-stroke scoring rates, and [`synth`] generates corpora with known
//! ground truth. The `stroketec` binary wraps all of it in a CLI ([`cli`]).

pub mod classifier;
pub mod cli;
pub mod error;
pub mod event_signal;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod tactics;

pub use classifier::{ClassifierModel, LabelSet};
pub use error::{Error, Result};
pub use event_signal::{FrameFeatureSeries, SegHead, SegmentSet, StrokeEvent, TargetSignal};
pub use graph::{Node, TechniqueGraph};
pub use metrics::{EvalReport, FrameLabeling};
pub use pipeline::{AnnotatedRally, Hyperparams, PipelineModel, StrideMode, StrokeSequence};
pub use synth::{SynthConfig, SynthCorpus};
pub use tactics::{Rally, Side, TacticStat};
