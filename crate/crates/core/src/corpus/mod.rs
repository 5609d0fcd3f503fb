//! Corpus ingestion and unigram token distributions.
//!
//! A corpus is one or more files of documents (one per line, either raw text
//! or a JSON object with a text field). Ingestion draws a seeded uniform
//! sample of at most `sample_limit` non-empty documents, tokenizes them and
//! returns exact integer counts. Probabilities are derived from the counts on
//! demand, so partial counts from different files merge without rounding.

mod mixture;
mod sample;
mod tokenize;
mod udist;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use mixture::{mix_distributions, parse_mixes_json, MixtureComponent, MixtureSpec};
pub use sample::{document_priority, ingest_corpus, ingest_corpus_with_stats, IngestStats};
pub use tokenize::Tokenizer;
pub use udist::{read_udist, write_udist, UdistHeader};

/// Tolerance on `Σ probs = 1` and on mixture weight sums.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus `{0}` contains no non-empty documents")]
    EmptyCorpus(String),
    #[error("{}:{line}: {reason}", path.display())]
    MalformedInput { path: PathBuf, line: u64, reason: String },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mixture weights sum to {sum}, expected 1")]
    WeightSumViolation { sum: f64 },
    #[error("mixture has no components")]
    EmptyComponents,
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution file line {line}: {reason}")]
    MalformedDistribution { line: usize, reason: String },
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

/// Names travel through space-separated headers and CSV cells.
pub(crate) fn check_name(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("name is empty".into());
    }
    if name.chars().any(|c| c.is_whitespace() || c == ',' || c == '"') {
        return Err(format!("name `{name}` contains whitespace, a comma or a quote"));
    }
    Ok(())
}

/// Layout of each input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputFormat {
    /// One document per line.
    PlainText,
    /// One JSON object per line; the document is the string under `field`.
    JsonLines { field: String },
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputFormat::PlainText => f.write_str("txt"),
            InputFormat::JsonLines { field } => write!(f, "jsonl:{field}"),
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "txt" => Ok(InputFormat::PlainText),
            Some(("jsonl", field)) if !field.is_empty() => Ok(InputFormat::JsonLines {
                field: field.to_owned(),
            }),
            _ => Err(format!(
                "unknown input format `{s}` (expected `txt` or `jsonl:<field>`)"
            )),
        }
    }
}

/// What to ingest and how much of it to sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub name: String,
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    /// Maximum number of documents kept by the sampler.
    pub sample_limit: usize,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        check_name(&self.name).map_err(CorpusError::InvalidSpec)?;
        if self.inputs.is_empty() {
            return Err(CorpusError::InvalidSpec("no input files".into()));
        }
        if self.sample_limit == 0 {
            return Err(CorpusError::InvalidSpec("sample limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unigram distribution over a vocabulary.
///
/// Distributions produced by ingestion keep their exact counts; mixtures
/// only carry probabilities. Tokens are kept in byte order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    name: String,
    counts: Option<(BTreeMap<String, u64>, u64)>,
    probs: BTreeMap<String, f64>,
}

impl TokenDistribution {
    /// Builds a distribution from exact counts. Zero counts are dropped.
    pub fn from_counts(name: impl Into<String>, counts: BTreeMap<String, u64>) -> Result<Self, CorpusError> {
        let name = name.into();
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total = counts
            .values()
            .try_fold(0u64, |acc, c| acc.checked_add(*c))
            .ok_or_else(|| CorpusError::InvalidDistribution("total count overflows u64".into()))?;
        if total == 0 {
            return Err(CorpusError::InvalidDistribution(format!(
                "`{name}` has zero total count"
            )));
        }
        let denom = total as f64;
        let probs = counts.iter().map(|(t, c)| (t.clone(), *c as f64 / denom)).collect();
        Ok(Self {
            name,
            counts: Some((counts, total)),
            probs,
        })
    }

    /// Builds a distribution from probabilities, which must lie in `(0, 1]`
    /// and sum to one.
    pub fn from_probs(name: impl Into<String>, probs: BTreeMap<String, f64>) -> Result<Self, CorpusError> {
        let name = name.into();
        if probs.is_empty() {
            return Err(CorpusError::InvalidDistribution(format!("`{name}` is empty")));
        }
        if let Some((t, p)) = probs.iter().find(|(_, p)| !(**p > 0.0 && **p <= 1.0)) {
            return Err(CorpusError::InvalidDistribution(format!(
                "`{name}`: probability of `{t}` is {p}"
            )));
        }
        // Loose guard; mixtures of normalized inputs land far inside it.
        let sum: f64 = probs.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidDistribution(format!(
                "`{name}`: probabilities sum to {sum}"
            )));
        }
        Ok(Self {
            name,
            counts: None,
            probs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Exact token counts, if this distribution came from counting.
    pub fn counts(&self) -> Option<&BTreeMap<String, u64>> {
        self.counts.as_ref().map(|(c, _)| c)
    }

    pub fn total(&self) -> Option<u64> {
        self.counts.as_ref().map(|(_, t)| *t)
    }

    pub fn probs(&self) -> &BTreeMap<String, f64> {
        &self.probs
    }

    /// Probability of `token`, zero outside the vocabulary.
    pub fn prob(&self, token: &str) -> f64 {
        self.probs.get(token).copied().unwrap_or(0.0)
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.probs.contains_key(token)
    }
}
