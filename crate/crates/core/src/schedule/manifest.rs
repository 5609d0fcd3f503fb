//! Batch-level interleaving of general and specialized data.
//!
//! Batch `i` of the midtraining window is specialized iff
//! `⌊(i+1)·w⌋ > ⌊i·w⌋`. The specialized count after `k` batches is then
//! `⌊k·w⌋`, so every prefix stays within one batch of the target share
//! without any randomness.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{MidtrainPlan, ScheduleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BatchSource {
    #[serde(rename = "G")]
    General,
    #[serde(rename = "S")]
    Specialized,
}

impl BatchSource {
    pub fn code(self) -> &'static str {
        match self {
            BatchSource::General => "G",
            BatchSource::Specialized => "S",
        }
    }
}

pub(crate) fn is_specialized(index: u64, weight: f64) -> bool {
    ((index + 1) as f64 * weight).floor() > (index as f64 * weight).floor()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchManifest {
    pub plan: MidtrainPlan,
    pub batch_tokens: u64,
    pub sources: Vec<BatchSource>,
    /// Token count of the final batch when the window is not a multiple of
    /// `batch_tokens`.
    pub partial_tail_tokens: Option<u64>,
}

#[derive(Serialize)]
struct Header<'a> {
    manifest: &'static str,
    tool_version: &'static str,
    plan: &'a MidtrainPlan,
    batch_tokens: u64,
    batches: usize,
    specialized_batches: usize,
    partial_tail_tokens: Option<u64>,
}

impl BatchManifest {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn specialized_count(&self) -> usize {
        self.sources.iter().filter(|s| **s == BatchSource::Specialized).count()
    }

    /// Tokens carried by batch `index`.
    pub fn batch_size(&self, index: usize) -> u64 {
        match self.partial_tail_tokens {
            Some(tail) if index + 1 == self.sources.len() => tail,
            _ => self.batch_tokens,
        }
    }

    pub fn total_tokens(&self) -> u64 {
        (0..self.sources.len()).map(|i| self.batch_size(i)).sum()
    }

    /// JSON-lines: a header record with the plan, then
    /// `{"i":<index>,"src":"G"|"S"}` per batch. A partial tail batch also
    /// carries `"tokens"` and `"partial":true`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header {
            manifest: "mixplan-batch-manifest-v1",
            tool_version: crate::TOOL_VERSION,
            plan: &self.plan,
            batch_tokens: self.batch_tokens,
            batches: self.sources.len(),
            specialized_batches: self.specialized_count(),
            partial_tail_tokens: self.partial_tail_tokens,
        };
        let mut text = serde_json::to_string(&header).map_err(std::io::Error::other)?;
        text.push('\n');
        let last = self.sources.len().saturating_sub(1);
        for (i, src) in self.sources.iter().enumerate() {
            match self.partial_tail_tokens {
                Some(tail) if i == last => text.push_str(&format!(
                    "{{\"i\":{i},\"src\":\"{}\",\"tokens\":{tail},\"partial\":true}}\n",
                    src.code()
                )),
                _ => text.push_str(&format!("{{\"i\":{i},\"src\":\"{}\"}}\n", src.code())),
            }
        }
        out.write_all(text.as_bytes())
    }
}

/// Lays out the midtraining window of a feasible plan in batches of
/// `batch_tokens`.
pub fn emit_manifest(plan: &MidtrainPlan, batch_tokens: u64) -> Result<BatchManifest, ScheduleError> {
    if !plan.is_feasible() {
        return Err(ScheduleError::InfeasiblePlan);
    }
    if batch_tokens == 0 {
        return Err(ScheduleError::InvalidBatchTokens);
    }
    let window = plan.window_tokens();
    let n_batches = window.div_ceil(batch_tokens);
    let remainder = window % batch_tokens;
    let sources = (0..n_batches)
        .map(|i| {
            if is_specialized(i, plan.mixture_weight) {
                BatchSource::Specialized
            } else {
                BatchSource::General
            }
        })
        .collect();
    Ok(BatchManifest {
        plan: plan.clone(),
        batch_tokens,
        sources,
        partial_tail_tokens: (remainder != 0).then_some(remainder),
    })
}
