use serde::{Deserialize, Serialize};

use super::ScheduleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    Midtraining,
    /// Midtraining with 100% specialized data from the switch point on.
    ContinuedPretraining,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Feasibility {
    Feasible,
    /// The window would need more specialized tokens than exist, i.e. the
    /// specialized data would repeat.
    RepetitionRisk {
        consumed: f64,
        available: u64,
    },
}

/// Data budget of one midtraining phase laid over a fixed training run.
///
/// The phase covers `[start_tokens, total_tokens)`; a fraction
/// `mixture_weight` of it is specialized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidtrainPlan {
    pub kind: PlanKind,
    pub total_tokens: u64,
    pub start_tokens: u64,
    pub mixture_weight: f64,
    pub specialized_available_tokens: u64,
    /// `(total_tokens − start_tokens) × mixture_weight`.
    pub specialized_consumed: f64,
    pub feasibility: Feasibility,
}

impl MidtrainPlan {
    /// Computes the plan and its verdict without rejecting infeasible ones.
    pub fn evaluate(
        kind: PlanKind,
        total_tokens: u64,
        start_tokens: u64,
        mixture_weight: f64,
        available: u64,
    ) -> Result<Self, ScheduleError> {
        if start_tokens > total_tokens {
            return Err(ScheduleError::InvalidWindow {
                start: start_tokens,
                total: total_tokens,
            });
        }
        if !(0.0..=1.0).contains(&mixture_weight) {
            return Err(ScheduleError::InvalidWeight(mixture_weight));
        }
        let consumed = (total_tokens - start_tokens) as f64 * mixture_weight;
        let feasibility = if consumed <= available as f64 {
            Feasibility::Feasible
        } else {
            Feasibility::RepetitionRisk { consumed, available }
        };
        Ok(Self {
            kind,
            total_tokens,
            start_tokens,
            mixture_weight,
            specialized_available_tokens: available,
            specialized_consumed: consumed,
            feasibility,
        })
    }

    pub fn window_tokens(&self) -> u64 {
        self.total_tokens - self.start_tokens
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility == Feasibility::Feasible
    }
}

/// A midtraining plan that must fit in the available specialized data.
pub fn plan_midtraining(
    total_tokens: u64,
    start_tokens: u64,
    weight: f64,
    available: u64,
) -> Result<MidtrainPlan, ScheduleError> {
    let plan = MidtrainPlan::evaluate(PlanKind::Midtraining, total_tokens, start_tokens, weight, available)?;
    match plan.feasibility {
        Feasibility::Feasible => Ok(plan),
        Feasibility::RepetitionRisk { consumed, available } => {
            Err(ScheduleError::RepetitionRisk { consumed, available })
        }
    }
}

/// Switches to 100% specialized data at `switch_tokens`.
///
/// Plans that exceed the available data are returned with a
/// [`Feasibility::RepetitionRisk`] verdict instead of an error: multi-epoch
/// continued pretraining is a valid, if discouraged, configuration.
pub fn continued_pretraining_plan(
    total_tokens: u64,
    switch_tokens: u64,
    available: u64,
) -> Result<MidtrainPlan, ScheduleError> {
    MidtrainPlan::evaluate(
        PlanKind::ContinuedPretraining,
        total_tokens,
        switch_tokens,
        1.0,
        available,
    )
}

/// Fixed parameters of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepBase {
    pub total_tokens: u64,
    pub start_tokens: u64,
    pub weight: f64,
    pub available: u64,
}

/// The swept axis and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum SweepValues {
    /// Midtraining start points, in tokens.
    Timing(Vec<u64>),
    /// Mixture weights.
    Weight(Vec<f64>),
}

/// One plan per swept value; infeasible plans are kept with their verdicts.
pub fn generate_sweep(values: &SweepValues, fixed: &SweepBase) -> Result<Vec<MidtrainPlan>, ScheduleError> {
    let eval = |start, weight| {
        MidtrainPlan::evaluate(
            PlanKind::Midtraining,
            fixed.total_tokens,
            start,
            weight,
            fixed.available,
        )
    };
    match values {
        SweepValues::Timing(starts) => starts.iter().map(|s| eval(*s, fixed.weight)).collect(),
        SweepValues::Weight(weights) => weights.iter().map(|w| eval(fixed.start_tokens, *w)).collect(),
    }
}
