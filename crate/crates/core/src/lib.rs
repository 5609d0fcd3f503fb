//! Planning and analysis primitives for language-model midtraining.
//!
//! The crate is organised around the life of a midtraining study:
//!
//! - [`corpus`] streams text corpora into unigram [`TokenDistribution`]s and
//!   simulates mixtures at the frequency level.
//! - [`simil`] scores pairs of distributions (Jaccard, overlap, cosine,
//!   Jensen–Shannon) and fills similarity matrices.
//! - [`planner`] turns a similarity matrix into proximity advantages, rankings
//!   and permutation-tested correlations against observed improvements.
//! - [`schedule`] models training sequences, checks midtraining data budgets,
//!   lays out batch manifests and emits hyperparameter presets.
//! - [`cka`] measures representational drift with linear CKA.
//! - [`report`] aggregates loss ledgers into forgetting deltas and tables.
//!
//! Every operation is a pure function of its inputs; all randomness is seeded.

pub mod cka;
pub mod corpus;
pub mod planner;
pub mod report;
pub mod schedule;
pub mod seed;
pub mod simil;

pub use cka::{ActivationMatrix, CkaError, CkaMatrix, ModelState, StateComparison};
pub use corpus::{CorpusError, CorpusSpec, IngestStats, InputFormat, MixtureSpec, TokenDistribution, Tokenizer};
pub use planner::{CorrelationResult, PlannerError, ProximityAdvantage};
pub use report::{AggregateRow, LossRecord, ReportError, TableFormat};
pub use schedule::{
    BatchManifest, BatchSource, Feasibility, MidtrainPlan, ScheduleError, TrainingPhase, TrainingSequence,
};
pub use simil::{Metric, SimilError, SimilarityMatrix, SimilarityScore};

/// Version string embedded in emitted artifacts.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
