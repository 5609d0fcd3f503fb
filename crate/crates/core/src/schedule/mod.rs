//! Training sequences, midtraining data budgets, batch manifests and presets.

mod manifest;
mod plan;
mod preset;
mod sequence;

use thiserror::Error;

pub use manifest::{emit_manifest, BatchManifest, BatchSource};
pub use plan::{
    continued_pretraining_plan, generate_sweep, plan_midtraining, Feasibility, MidtrainPlan, PlanKind, SweepBase,
    SweepValues,
};
pub use preset::{
    emit_training_preset, ConfigDocument, FinetuneDataset, ModelSize, PresetPhase, StepGeometry, FINETUNE_LR_GRID,
};
pub use sequence::{build_sequence, TrainingPhase, TrainingSequence};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("a training sequence needs at least one phase")]
    EmptySequence,
    #[error("invalid phase `{0}`: step count and tokens per step must be positive")]
    InvalidPhase(String),
    #[error("midtraining start {start} lies beyond the training budget {total}")]
    InvalidWindow { start: u64, total: u64 },
    #[error("mixture weight {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error("repetition risk: plan consumes {consumed} specialized tokens but only {available} are available")]
    RepetitionRisk { consumed: f64, available: u64 },
    #[error("cannot lay out batches for an infeasible plan")]
    InfeasiblePlan,
    #[error("batch size must be a positive number of tokens")]
    InvalidBatchTokens,
    #[error("unknown preset: {0}")]
    UnknownPreset(String),
}
