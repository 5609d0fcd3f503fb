//! Loss ledgers, seed aggregation, forgetting deltas and result tables.
//!
//! Losses are natural-log cross-entropies and are never converted. A ledger
//! row is one finetuning run: `(model, midtrain mix, SFT dataset, seed)` with
//! its in-domain SFT validation loss and its held-out C4 loss after
//! finetuning.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("duplicate record for model `{model}`, mix `{mix}`, dataset `{dataset}`, seed {seed}")]
    DuplicateRecord {
        model: String,
        mix: String,
        dataset: String,
        seed: i64,
    },
    #[error("the ledger is empty")]
    EmptyLedger,
    #[error("control mix `{control}` missing for model `{model}`, dataset `{dataset}`")]
    MissingControl {
        control: String,
        model: String,
        dataset: String,
    },
    #[error("invalid record on line {line}: {reason}")]
    InvalidRecord { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const LEDGER_HEADER: [&str; 6] = ["model", "mix", "dataset", "seed", "sft_loss", "c4_loss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    #[serde(rename = "model")]
    pub model_size: String,
    #[serde(rename = "mix")]
    pub midtrain_mix: String,
    #[serde(rename = "dataset")]
    pub sft_dataset: String,
    pub seed: i64,
    #[serde(rename = "sft_loss")]
    pub sft_val_loss: f64,
    #[serde(rename = "c4_loss")]
    pub c4_val_loss: f64,
    /// Identifier of the held-out evaluation shard, when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_set: Option<String>,
}

impl LossRecord {
    pub fn new(model: &str, mix: &str, dataset: &str, seed: i64, sft_loss: f64, c4_loss: f64) -> Self {
        Self {
            model_size: model.to_owned(),
            midtrain_mix: mix.to_owned(),
            sft_dataset: dataset.to_owned(),
            seed,
            sft_val_loss: sft_loss,
            c4_val_loss: c4_loss,
            eval_set: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, v) in [("sft_loss", self.sft_val_loss), ("c4_loss", self.c4_val_loss)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Reads a ledger CSV with header `model,mix,dataset,seed,sft_loss,c4_loss`
/// and an optional trailing `eval_set` column.
pub fn read_ledger<R: Read>(input: R) -> Result<Vec<LossRecord>, ReportError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < LEDGER_HEADER.len() || names[..LEDGER_HEADER.len()] != LEDGER_HEADER {
        return Err(ReportError::InvalidRecord {
            line: 1,
            reason: format!("expected header `{}`", LEDGER_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for result in reader.deserialize::<LossRecord>() {
        let record = result.map_err(|e| ReportError::InvalidRecord {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        record.validate().map_err(|reason| ReportError::InvalidRecord {
            line: records.len() as u64 + 2,
            reason,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_ledger<W: Write>(out: W, records: &[LossRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_HEADER)?;
    for r in records {
        w.write_record([
            r.model_size.clone(),
            r.midtrain_mix.clone(),
            r.sft_dataset.clone(),
            r.seed.to_string(),
            format!("{:?}", r.sft_val_loss),
            format!("{:?}", r.c4_val_loss),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model_size: String,
    pub midtrain_mix: String,
    pub sft_dataset: String,
    pub mean_sft: f64,
    pub mean_c4: f64,
    /// Sample standard deviations; `None` for single-seed rows and for rows
    /// parsed back from a table.
    pub std_sft: Option<f64>,
    pub std_c4: Option<f64>,
    pub n_seeds: usize,
    pub bold_sft: bool,
    pub bold_c4: bool,
}

fn round3(v: f64) -> f64 {
    format!("{v:.3}").parse().expect("formatted float parses")
}

impl AggregateRow {
    /// The row as it survives a trip through a rendered table.
    pub fn quantized(&self) -> Self {
        Self {
            mean_sft: round3(self.mean_sft),
            mean_c4: round3(self.mean_c4),
            std_sft: None,
            std_c4: None,
            ..self.clone()
        }
    }
}

/// Mean and sample standard deviation, summing in the given order.
fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, std)
}

type GroupKey = (String, String);
type Cells<'a> = Vec<(String, Vec<&'a LossRecord>)>;

/// Records grouped by `(model, dataset)` then mix, in first-appearance order,
/// with each cell's records sorted by seed.
fn group(records: &[LossRecord]) -> Result<Vec<(GroupKey, Cells<'_>)>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyLedger);
    }
    let mut seen = HashSet::new();
    let mut groups: Vec<(GroupKey, Cells)> = Vec::new();
    for r in records {
        if !seen.insert((&r.model_size, &r.midtrain_mix, &r.sft_dataset, r.seed)) {
            return Err(ReportError::DuplicateRecord {
                model: r.model_size.clone(),
                mix: r.midtrain_mix.clone(),
                dataset: r.sft_dataset.clone(),
                seed: r.seed,
            });
        }
        let key = (r.model_size.clone(), r.sft_dataset.clone());
        let gi = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        let cells = &mut groups[gi].1;
        match cells.iter_mut().find(|(mix, _)| *mix == r.midtrain_mix) {
            Some((_, rs)) => rs.push(r),
            None => cells.push((r.midtrain_mix.clone(), vec![r])),
        }
    }
    for (_, cells) in &mut groups {
        for (_, rs) in cells.iter_mut() {
            rs.sort_by_key(|r| r.seed);
        }
    }
    Ok(groups)
}

/// Per-`(model, dataset, mix)` means over seeds; the minimum of each column
/// within a `(model, dataset)` group is flagged bold, ties included.
pub fn aggregate(records: &[LossRecord]) -> Result<Vec<AggregateRow>, ReportError> {
    let mut rows = Vec::new();
    for ((model, dataset), cells) in group(records)? {
        let start = rows.len();
        for (mix, rs) in cells {
            let sft: Vec<f64> = rs.iter().map(|r| r.sft_val_loss).collect();
            let c4: Vec<f64> = rs.iter().map(|r| r.c4_val_loss).collect();
            let (mean_sft, std_sft) = mean_std(&sft);
            let (mean_c4, std_c4) = mean_std(&c4);
            rows.push(AggregateRow {
                model_size: model.clone(),
                midtrain_mix: mix,
                sft_dataset: dataset.clone(),
                mean_sft,
                mean_c4,
                std_sft,
                std_c4,
                n_seeds: rs.len(),
                bold_sft: false,
                bold_c4: false,
            });
        }
        let block = &mut rows[start..];
        let min_sft = block.iter().map(|r| r.mean_sft).fold(f64::INFINITY, f64::min);
        let min_c4 = block.iter().map(|r| r.mean_c4).fold(f64::INFINITY, f64::min);
        for r in block {
            r.bold_sft = r.mean_sft == min_sft;
            r.bold_c4 = r.mean_c4 == min_c4;
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingDelta {
    pub model_size: String,
    pub sft_dataset: String,
    pub midtrain_mix: String,
    pub control: String,
    /// `mean_c4(mix) − mean_c4(control)`; negative means less forgetting.
    pub delta_c4: f64,
}

pub fn forgetting_delta(records: &[LossRecord], control: &str) -> Result<Vec<ForgettingDelta>, ReportError> {
    let rows = aggregate(records)?;
    let mut controls: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in &rows {
        if r.midtrain_mix == control {
            controls.insert((&r.model_size, &r.sft_dataset), r.mean_c4);
        }
    }
    rows.iter()
        .map(|r| {
            let base = controls
                .get(&(r.model_size.as_str(), r.sft_dataset.as_str()))
                .ok_or_else(|| ReportError::MissingControl {
                    control: control.to_owned(),
                    model: r.model_size.clone(),
                    dataset: r.sft_dataset.clone(),
                })?;
            Ok(ForgettingDelta {
                model_size: r.model_size.clone(),
                sft_dataset: r.sft_dataset.clone(),
                midtrain_mix: r.midtrain_mix.clone(),
                control: control.to_owned(),
                delta_c4: r.mean_c4 - base,
            })
        })
        .collect()
}

pub fn write_forgetting_csv<W: Write>(out: W, deltas: &[ForgettingDelta]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "dataset", "mix", "control", "delta_c4"])?;
    for d in deltas {
        w.write_record([
            d.model_size.clone(),
            d.sft_dataset.clone(),
            d.midtrain_mix.clone(),
            d.control.clone(),
            format!("{:.3}", d.delta_c4),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            _ => Err(format!("unknown table format `{s}`")),
        }
    }
}

pub const TABLE_CSV_HEADER: [&str; 8] = ["model", "dataset", "mix", "sft", "c4", "n_seeds", "bold_sft", "bold_c4"];

fn cell(v: f64, bold: bool) -> String {
    if bold {
        format!("**{v:.3}**")
    } else {
        format!("{v:.3}")
    }
}

/// Renders rows grouped by `(model, dataset)` with three decimals.
pub fn emit_table(rows: &[AggregateRow], format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => {
            let single_model = rows.windows(2).all(|w| w[0].model_size == w[1].model_size);
            let mut out = String::from("| Dataset | Midtrain Mix | SFT | C4 |\n|:--|:--|--:|--:|\n");
            let mut current: Option<(&str, &str)> = None;
            for r in rows {
                let key = (r.model_size.as_str(), r.sft_dataset.as_str());
                if current != Some(key) {
                    current = Some(key);
                    if single_model {
                        let _ = writeln!(out, "| **{}** | | | |", r.sft_dataset);
                    } else {
                        let _ = writeln!(out, "| **{} / {}** | | | |", r.model_size, r.sft_dataset);
                    }
                }
                let _ = writeln!(
                    out,
                    "| | {} | {} | {} |",
                    r.midtrain_mix,
                    cell(r.mean_sft, r.bold_sft),
                    cell(r.mean_c4, r.bold_c4)
                );
            }
            out
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(TABLE_CSV_HEADER).expect("in-memory write");
            for r in rows {
                w.write_record([
                    r.model_size.clone(),
                    r.sft_dataset.clone(),
                    r.midtrain_mix.clone(),
                    format!("{:.3}", r.mean_sft),
                    format!("{:.3}", r.mean_c4),
                    r.n_seeds.to_string(),
                    r.bold_sft.to_string(),
                    r.bold_c4.to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
        }
    }
}

/// Parses a table written by [`emit_table`] with [`TableFormat::Csv`].
pub fn parse_table_csv<R: Read>(input: R) -> Result<Vec<AggregateRow>, ReportError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(TABLE_CSV_HEADER) {
        return Err(ReportError::InvalidRecord {
            line: 1,
            reason: format!("expected header `{}`", TABLE_CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        let bad = |reason: String| ReportError::InvalidRecord { line, reason };
        let num = |k: usize| record[k].parse::<f64>().map_err(|e| bad(e.to_string()));
        let flag = |k: usize| record[k].parse::<bool>().map_err(|e| bad(e.to_string()));
        rows.push(AggregateRow {
            model_size: record[0].to_owned(),
            sft_dataset: record[1].to_owned(),
            midtrain_mix: record[2].to_owned(),
            mean_sft: num(3)?,
            mean_c4: num(4)?,
            std_sft: None,
            std_c4: None,
            n_seeds: record[5]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            bold_sft: flag(6)?,
            bold_c4: flag(7)?,
        });
    }
    Ok(rows)
}
