//! Seeded document sampling and counting.
//!
//! Sampling is bottom-k: every document gets a pseudo-random priority that
//! depends only on `(seed, file index, line number)`, and the `k` documents
//! with the smallest priorities are kept. This is a uniform sample without
//! replacement, and because priorities do not depend on visiting order the
//! per-file reservoirs can be filled in parallel and merged afterwards.

use std::collections::{BTreeMap, BinaryHeap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CorpusError, CorpusSpec, InputFormat, TokenDistribution, Tokenizer};
use crate::seed::{derive_seed, RESERVOIR};

/// Diagnostics gathered while ingesting a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub files: usize,
    /// Documents with at least one token.
    pub documents: u64,
    /// Documents skipped because they tokenized to nothing.
    pub empty_documents: u64,
    pub sampled_documents: usize,
}

/// Sampling priority of the document on `line` (1-based) of input `file_index`.
///
/// Uses a ChaCha8 stream per file keyed by the reservoir sub-seed and reads
/// one 64-bit word at a position fixed by the line number, so any document's
/// priority can be computed independently.
pub fn document_priority(seed: u64, file_index: usize, line: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, RESERVOIR));
    rng.set_stream(file_index as u64);
    rng.set_word_pos(u128::from(line) * 2);
    rng.next_u64()
}

type SampleKey = (u64, usize, u64);

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    key: SampleKey,
    tokens: Vec<String>,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-heap holding the `limit` smallest keys seen so far.
struct Reservoir {
    limit: usize,
    heap: BinaryHeap<Candidate>,
}

impl Reservoir {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            heap: BinaryHeap::with_capacity(limit.min(1 << 16) + 1),
        }
    }

    fn would_accept(&self, key: &SampleKey) -> bool {
        self.heap.len() < self.limit || self.heap.peek().is_some_and(|top| *key < top.key)
    }

    fn offer(&mut self, candidate: Candidate) {
        self.heap.push(candidate);
        if self.heap.len() > self.limit {
            self.heap.pop();
        }
    }
}

struct FileScan {
    candidates: Vec<Candidate>,
    documents: u64,
    empty_documents: u64,
}

fn document_text(path: &Path, line_no: u64, line: &str, format: &InputFormat) -> Result<Option<String>, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedInput {
        path: path.to_owned(),
        line: line_no,
        reason,
    };
    match format {
        InputFormat::PlainText => Ok(Some(line.to_owned())),
        InputFormat::JsonLines { field } => {
            if line.trim().is_empty() {
                return Ok(None);
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
            match value.get(field) {
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(malformed(format!("field `{field}` is not a string"))),
                None => Err(malformed(format!("missing field `{field}`"))),
            }
        }
    }
}

fn scan_file(path: &Path, file_index: usize, spec: &CorpusSpec, tokenizer: Tokenizer) -> Result<FileScan, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut reservoir = Reservoir::new(spec.sample_limit);
    let mut documents = 0;
    let mut empty_documents = 0;
    let mut buf = Vec::new();
    let mut line_no = 0u64;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf).map_err(io_err)? == 0 {
            break;
        }
        line_no += 1;
        let mut bytes = buf.as_slice();
        if let Some(rest) = bytes.strip_suffix(b"\n") {
            bytes = rest;
        }
        if let Some(rest) = bytes.strip_suffix(b"\r") {
            bytes = rest;
        }
        let line = std::str::from_utf8(bytes).map_err(|e| CorpusError::MalformedInput {
            path: path.to_owned(),
            line: line_no,
            reason: format!("invalid UTF-8: {e}"),
        })?;
        let Some(text) = document_text(path, line_no, line, &spec.format)? else {
            empty_documents += 1;
            continue;
        };
        let tokens = tokenizer.tokenize(&text);
        if tokens.is_empty() {
            empty_documents += 1;
            continue;
        }
        documents += 1;
        let key = (document_priority(spec.seed, file_index, line_no), file_index, line_no);
        if reservoir.would_accept(&key) {
            reservoir.offer(Candidate { key, tokens });
        }
    }
    Ok(FileScan {
        candidates: reservoir.heap.into_vec(),
        documents,
        empty_documents,
    })
}

/// Ingests a corpus into an exact-count unigram distribution.
pub fn ingest_corpus(spec: &CorpusSpec, tokenizer: Tokenizer) -> Result<TokenDistribution, CorpusError> {
    ingest_corpus_with_stats(spec, tokenizer).map(|(d, _)| d)
}

/// Like [`ingest_corpus`], also returning sampling diagnostics.
pub fn ingest_corpus_with_stats(
    spec: &CorpusSpec,
    tokenizer: Tokenizer,
) -> Result<(TokenDistribution, IngestStats), CorpusError> {
    spec.validate()?;
    let scans: Vec<Result<FileScan, CorpusError>> = spec
        .inputs
        .par_iter()
        .enumerate()
        .map(|(i, path)| scan_file(path, i, spec, tokenizer))
        .collect();

    let mut stats = IngestStats {
        files: spec.inputs.len(),
        ..IngestStats::default()
    };
    let mut pool = Vec::new();
    // First error in input order, regardless of which thread hit it first.
    for scan in scans {
        let scan = scan?;
        stats.documents += scan.documents;
        stats.empty_documents += scan.empty_documents;
        pool.extend(scan.candidates);
    }
    if stats.documents == 0 {
        return Err(CorpusError::EmptyCorpus(spec.name.clone()));
    }
    pool.sort_unstable();
    pool.truncate(spec.sample_limit);
    stats.sampled_documents = pool.len();

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for candidate in pool {
        for token in candidate.tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let dist = TokenDistribution::from_counts(spec.name.clone(), counts)?;
    Ok((dist, stats))
}
