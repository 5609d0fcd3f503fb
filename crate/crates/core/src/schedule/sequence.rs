use serde::{Deserialize, Serialize};

use super::ScheduleError;

/// One `(data, objective, steps)` phase. The objective is an opaque label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPhase {
    pub label: String,
    /// Name of the mixture the phase trains on.
    pub data: String,
    pub objective: String,
    pub steps: u64,
    pub tokens_per_step: u64,
}

impl TrainingPhase {
    pub fn token_budget(&self) -> u64 {
        self.steps.saturating_mul(self.tokens_per_step)
    }
}

/// Phases in training order: pretraining first, finetuning last, midtraining
/// in between. Each phase initializes the next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub phases: Vec<TrainingPhase>,
    /// Violations of the usual `pretrain > midtrain > finetune` step ordering.
    pub warnings: Vec<String>,
}

impl TrainingSequence {
    pub fn pretraining(&self) -> &TrainingPhase {
        &self.phases[0]
    }

    pub fn finetuning(&self) -> Option<&TrainingPhase> {
        (self.phases.len() > 1).then(|| &self.phases[self.phases.len() - 1])
    }

    pub fn midtraining(&self) -> &[TrainingPhase] {
        match self.phases.len() {
            0..=2 => &[],
            n => &self.phases[1..n - 1],
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.phases.iter().map(TrainingPhase::token_budget).sum()
    }
}

pub fn build_sequence(phases: Vec<TrainingPhase>) -> Result<TrainingSequence, ScheduleError> {
    if phases.is_empty() {
        return Err(ScheduleError::EmptySequence);
    }
    if let Some(p) = phases.iter().find(|p| p.steps == 0 || p.tokens_per_step == 0) {
        return Err(ScheduleError::InvalidPhase(p.label.clone()));
    }
    let mut warnings = Vec::new();
    if let [first, middle @ .., last] = phases.as_slice() {
        for phase in middle.iter().chain(std::iter::once(last)) {
            if first.steps <= phase.steps {
                warnings.push(format!(
                    "pretraining phase `{}` ({} steps) is not longer than `{}` ({} steps)",
                    first.label, first.steps, phase.label, phase.steps
                ));
            }
        }
        for phase in middle {
            if phase.steps <= last.steps {
                warnings.push(format!(
                    "midtraining phase `{}` ({} steps) is not longer than finetuning `{}` ({} steps)",
                    phase.label, phase.steps, last.label, last.steps
                ));
            }
        }
    }
    Ok(TrainingSequence { phases, warnings })
}
