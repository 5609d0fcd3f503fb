//! Hyperparameter presets for the Pythia-style 70M/160M/410M runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ScheduleError;

/// Flat key → value configuration document.
pub type ConfigDocument = BTreeMap<String, Value>;

/// Candidate finetuning peak learning rates.
pub const FINETUNE_LR_GRID: [f64; 26] = [
    4e-6, 8e-6, 1e-5, 2e-5, 4e-5, 5e-5, 6e-5, 7e-5, 8e-5, 9e-5, 1e-4, 1.2e-4, 1.4e-4, 1.6e-4, 1.8e-4, 2e-4, 2.4e-4,
    4e-4, 5e-4, 6e-4, 8e-4, 1e-3, 2e-3, 3e-3, 4e-3, 6e-3,
];

const PRETRAIN_TOTAL_TOKENS: u64 = 128_000_000_000;

/// Tokens processed per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepGeometry {
    pub global_batch: u64,
    pub sequence_length: u64,
}

impl Default for StepGeometry {
    fn default() -> Self {
        Self {
            global_batch: 1024,
            sequence_length: 2048,
        }
    }
}

impl StepGeometry {
    pub fn tokens_per_step(&self) -> u64 {
        self.global_batch * self.sequence_length
    }

    /// Steps needed to consume `tokens`, rounded up.
    pub fn steps_for(&self, tokens: u64) -> u64 {
        tokens.div_ceil(self.tokens_per_step())
    }

    pub fn tokens_for(&self, steps: u64) -> u64 {
        steps * self.tokens_per_step()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSize {
    M70,
    M160,
    M410,
}

impl ModelSize {
    pub fn label(self) -> &'static str {
        match self {
            ModelSize::M70 => "70M",
            ModelSize::M160 => "160M",
            ModelSize::M410 => "410M",
        }
    }

    fn micro_batch(self) -> u64 {
        match self {
            ModelSize::M410 => 8,
            _ => 16,
        }
    }

    fn ranks(self) -> u64 {
        match self {
            ModelSize::M410 => 8,
            _ => 4,
        }
    }
}

impl fmt::Display for ModelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelSize {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "70m" => Ok(ModelSize::M70),
            "160m" => Ok(ModelSize::M160),
            "410m" => Ok(ModelSize::M410),
            _ => Err(ScheduleError::UnknownPreset(format!("model size `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetPhase {
    Pretrain,
    Finetune,
}

impl FromStr for PresetPhase {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrain" => Ok(PresetPhase::Pretrain),
            "finetune" => Ok(PresetPhase::Finetune),
            _ => Err(ScheduleError::UnknownPreset(format!("phase `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FinetuneDataset {
    Gsm8k,
    Lima,
    Pycode,
    Sciq,
}

impl FinetuneDataset {
    pub fn label(self) -> &'static str {
        match self {
            FinetuneDataset::Gsm8k => "GSM8K",
            FinetuneDataset::Lima => "LIMA",
            FinetuneDataset::Pycode => "Pycode",
            FinetuneDataset::Sciq => "SciQ",
        }
    }

    /// Selected peak learning rate per model size.
    pub fn peak_lr(self, model: ModelSize) -> f64 {
        use FinetuneDataset::*;
        use ModelSize::*;
        match (self, model) {
            (Gsm8k, M70) => 8e-4,
            (Gsm8k, M160) => 4e-4,
            (Gsm8k, M410) => 4e-4,
            (Lima, M70) => 1.2e-4,
            (Lima, M160) => 5e-5,
            (Lima, M410) => 5e-5,
            (Pycode, M70) => 1e-3,
            (Pycode, M160) => 5e-4,
            (Pycode, M410) => 4e-4,
            (Sciq, M70) => 8e-4,
            (Sciq, M160) => 2.4e-4,
            (Sciq, M410) => 6e-4,
        }
    }

    pub fn train_samples(self) -> u64 {
        match self {
            FinetuneDataset::Gsm8k => 7_500,
            FinetuneDataset::Lima => 1_000,
            FinetuneDataset::Pycode => 5_000,
            FinetuneDataset::Sciq => 13_679,
        }
    }

    /// Whether the loss skips the prompt tokens.
    pub fn prompt_masked(self) -> bool {
        self == FinetuneDataset::Gsm8k
    }
}

impl FromStr for FinetuneDataset {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gsm8k" => Ok(FinetuneDataset::Gsm8k),
            "lima" => Ok(FinetuneDataset::Lima),
            "pycode" => Ok(FinetuneDataset::Pycode),
            "sciq" => Ok(FinetuneDataset::Sciq),
            _ => Err(ScheduleError::UnknownPreset(format!("dataset `{s}`"))),
        }
    }
}

fn insert(doc: &mut ConfigDocument, key: &str, value: Value) {
    doc.insert(key.to_owned(), value);
}

pub fn emit_training_preset(
    model: ModelSize,
    phase: PresetPhase,
    dataset: Option<&str>,
) -> Result<ConfigDocument, ScheduleError> {
    let mut doc = ConfigDocument::new();
    insert(&mut doc, "model", json!(model.label()));
    insert(&mut doc, "micro_batch_size", json!(model.micro_batch()));
    insert(&mut doc, "lr_schedule", json!("cosine"));
    insert(&mut doc, "warmup_fraction", json!(0.1));
    insert(&mut doc, "warmup", json!("linear"));
    match phase {
        PresetPhase::Pretrain => {
            if let Some(d) = dataset {
                return Err(ScheduleError::UnknownPreset(format!(
                    "pretraining presets take no dataset (got `{d}`)"
                )));
            }
            let geometry = StepGeometry::default();
            insert(&mut doc, "phase", json!("pretrain"));
            insert(&mut doc, "global_batch_size", json!(geometry.global_batch));
            insert(&mut doc, "sequence_length", json!(geometry.sequence_length));
            insert(&mut doc, "tokens_per_step", json!(geometry.tokens_per_step()));
            insert(&mut doc, "total_tokens", json!(PRETRAIN_TOTAL_TOKENS));
            insert(
                &mut doc,
                "total_steps",
                json!(geometry.steps_for(PRETRAIN_TOTAL_TOKENS)),
            );
            insert(&mut doc, "num_ranks", json!(model.ranks()));
            insert(&mut doc, "max_lr", json!(3e-4));
            insert(&mut doc, "min_lr", json!(1e-6));
            insert(&mut doc, "optimizer", json!("AdamW"));
            insert(&mut doc, "betas", json!([0.9, 0.95]));
            insert(&mut doc, "weight_decay", json!(0.1));
            insert(&mut doc, "precision", json!("bf16"));
        }
        PresetPhase::Finetune => {
            insert(&mut doc, "phase", json!("finetune"));
            insert(&mut doc, "epochs", json!(4));
            insert(&mut doc, "global_batch_size", json!(64));
            insert(&mut doc, "lr_grid", json!(FINETUNE_LR_GRID));
            if let Some(name) = dataset {
                let ds: FinetuneDataset = name.parse()?;
                insert(&mut doc, "dataset", json!(ds.label()));
                insert(&mut doc, "peak_lr", json!(ds.peak_lr(model)));
                insert(&mut doc, "train_samples", json!(ds.train_samples()));
                insert(&mut doc, "prompt_masked", json!(ds.prompt_masked()));
            }
        }
    }
    Ok(doc)
}
