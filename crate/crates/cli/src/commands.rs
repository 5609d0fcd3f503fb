//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use mixplan_core::corpus::{ingest_corpus_with_stats, parse_mixes_json, read_udist, write_udist};
use mixplan_core::schedule::{
    continued_pretraining_plan, emit_manifest, emit_training_preset, generate_sweep, plan_midtraining, SweepBase,
    SweepValues,
};
use mixplan_core::simil::{similarity_matrix, MatrixRow};
use mixplan_core::{cka, planner, report, seed};
use mixplan_core::{CorpusSpec, ModelState, SimilarityMatrix, TokenDistribution, Tokenizer};
use serde_json::json;

use crate::config::{init_threads, parse_tokens, FileConfig, RunConfig};
use crate::figure::render_figure;
use crate::{
    CkaArgs, Cli, Command, CorrelateArgs, FigureArgs, IngestArgs, PlanArgs, PresetArgs, ReportArgs, ScheduleArgs,
    SimilarityArgs, SweepArgs, SweepAxis,
};

const DEFAULT_SAMPLE: usize = 10_000;
const DEFAULT_PERMUTATIONS: usize = 10_000;
const DEFAULT_BATCH_TOKENS: u64 = 2_097_152;

pub fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    init_threads(cli.threads.or(config.threads))?;
    match cli.command {
        Command::Ingest(a) => ingest(a, &config),
        Command::Similarity(a) => similarity(a),
        Command::Plan(a) => plan(a, &config),
        Command::Correlate(a) => correlate(a, &config),
        Command::Schedule(a) => schedule(a, &config),
        Command::Sweep(a) => sweep(a),
        Command::Preset(a) => preset(a),
        Command::Cka(a) => cka_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Figure(a) => figure(a, &config),
    }
}

/// `table.md` + `forgetting` → `table.forgetting.csv`
pub fn companion(out: &Path, tag: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn provenance(rc: &RunConfig, outputs: &[&Path]) -> Result<()> {
    for out in outputs {
        rc.write_for(out)?;
    }
    Ok(())
}

fn paths(ps: &[PathBuf]) -> Vec<String> {
    ps.iter().map(|p| p.display().to_string()).collect()
}

fn ingest(a: IngestArgs, config: &FileConfig) -> Result<()> {
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let sample = a.sample.or(config.sample).unwrap_or(DEFAULT_SAMPLE);
    let tokenizer = match (a.tokenizer, &config.tokenizer) {
        (Some(t), _) => t,
        (None, Some(id)) => id.parse::<Tokenizer>().map_err(|e| anyhow!(e))?,
        (None, None) => Tokenizer::default(),
    };
    let name = match a.name {
        Some(n) => n,
        None => a
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("cannot derive a name from {}", a.out.display()))?,
    };
    let spec = CorpusSpec {
        name: name.clone(),
        inputs: a.inputs.clone(),
        format: a.format.clone(),
        sample_limit: sample,
        seed,
    };
    let (dist, stats) = ingest_corpus_with_stats(&spec, tokenizer)?;
    info!(
        "{name}: {} documents in {} files, {} empty, {} sampled, {} tokens",
        stats.documents,
        stats.files,
        stats.empty_documents,
        stats.sampled_documents,
        dist.total().unwrap_or(0)
    );
    if stats.empty_documents > 0 {
        warn!("{name}: skipped {} documents with no tokens", stats.empty_documents);
    }
    let mut out = create(&a.out)?;
    write_udist(&mut out, &dist, tokenizer.id(), seed)?;
    out.flush()?;
    let rc = RunConfig::new(
        "ingest",
        json!({
            "name": name,
            "inputs": paths(&a.inputs),
            "format": a.format.to_string(),
            "sample": sample,
            "seed": seed,
            "reservoir_seed": seed::derive_seed(seed, seed::RESERVOIR),
            "tokenizer": tokenizer.id(),
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out])
}

fn load_dist(path: &Path) -> Result<(mixplan_core::corpus::UdistHeader, TokenDistribution)> {
    read_udist(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn similarity(a: SimilarityArgs) -> Result<()> {
    let mut dists = Vec::new();
    let mut headers = Vec::new();
    for p in &a.dists {
        let (h, d) = load_dist(p)?;
        if dists.iter().any(|x: &TokenDistribution| x.name() == d.name()) {
            bail!("duplicate distribution name `{}` in {}", d.name(), p.display());
        }
        headers.push(h);
        dists.push(d);
    }
    let mixes = match &a.mixes {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_mixes_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Vec::new(),
    };
    for m in &mixes {
        if dists.iter().any(|d| d.name() == m.name) {
            bail!("mixture `{}` shadows a distribution of the same name", m.name);
        }
    }
    let refs: Vec<&TokenDistribution> = dists.iter().collect();
    let rows: Vec<MatrixRow<'_>> = dists
        .iter()
        .map(MatrixRow::Distribution)
        .chain(mixes.iter().map(MatrixRow::Mixture))
        .collect();
    let matrix = similarity_matrix(&rows, &refs, &refs, a.metric)?;

    matrix.write_csv(create(&a.out)?)?;
    let components = companion(&a.out, "components");
    matrix.write_components_csv(create(&components)?)?;

    let rc = RunConfig::new(
        "similarity",
        json!({
            "dists": paths(&a.dists),
            "distributions": headers.iter().map(|h| json!({
                "name": h.name, "total": h.total, "tokenizer": h.tokenizer, "seed": h.seed,
            })).collect::<Vec<_>>(),
            "mixes": a.mixes.as_ref().map(|p| p.display().to_string()),
            "mixtures": mixes.iter().map(|m| json!({
                "name": m.name,
                "components": m.components.iter().map(|c| json!([c.component, c.weight])).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "metric": a.metric.id(),
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out, &components])
}

fn plan(a: PlanArgs, config: &FileConfig) -> Result<()> {
    let threshold = a
        .grey_threshold
        .or(config.grey_threshold)
        .unwrap_or(planner::DEFAULT_GREY_THRESHOLD);
    let matrix =
        SimilarityMatrix::read_csv(open(&a.matrix)?).with_context(|| format!("reading {}", a.matrix.display()))?;
    let ranked = planner::rank_mixtures(&matrix, &a.base, &a.candidates, &a.target)?;

    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["rank", "mixture", "base", "target", "advantage", "near_zero"])?;
    for (i, pa) in ranked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            pa.mixture.clone(),
            pa.base.clone(),
            pa.target.clone(),
            format!("{:.6}", pa.advantage),
            pa.is_near_zero(threshold).to_string(),
        ])?;
    }
    w.flush()?;
    let rc = RunConfig::new(
        "plan",
        json!({
            "matrix": a.matrix.display().to_string(),
            "metric": matrix.metric.id(),
            "base": a.base,
            "target": a.target,
            "candidates": a.candidates,
            "grey_threshold": threshold,
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out])
}

/// Reads the `advantage` and `improvement` columns of a pairs CSV.
pub fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| anyhow!("{}: missing `{name}` column", path.display()))
    };
    let (ia, ii) = (col("advantage")?, col("improvement")?);
    let mut pairs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("").trim();
            field
                .parse()
                .with_context(|| format!("{} row {}: `{field}` is not a number", path.display(), line + 2))
        };
        pairs.push((num(ia)?, num(ii)?));
    }
    Ok(pairs)
}

fn correlate(a: CorrelateArgs, config: &FileConfig) -> Result<()> {
    let seed = a.seed.or(config.seed).unwrap_or(0);
    let permutations = a.permutations.or(config.permutations).unwrap_or(DEFAULT_PERMUTATIONS);
    let pairs = read_pairs(&a.pairs)?;
    let result = planner::correlate(&pairs, seed, permutations)?;
    info!("r = {:.4}, p = {:.4} over {} pairs", result.r, result.p_value, result.n);
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    write_all(&a.out, text.as_bytes())?;
    let rc = RunConfig::new(
        "correlate",
        json!({
            "pairs": a.pairs.display().to_string(),
            "seed": seed,
            "permutation_seed": seed::derive_seed(seed, seed::PERMUTATION),
            "permutations": permutations,
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out])
}

fn schedule(a: ScheduleArgs, config: &FileConfig) -> Result<()> {
    let batch_tokens = a.batch_tokens.or(config.batch_tokens).unwrap_or(DEFAULT_BATCH_TOKENS);
    let plan = if a.continued {
        continued_pretraining_plan(a.total_tokens, a.start_tokens, a.available)?
    } else {
        let weight = a.weight.ok_or_else(|| anyhow!("--weight is required"))?;
        plan_midtraining(a.total_tokens, a.start_tokens, weight, a.available)?
    };
    let manifest = emit_manifest(&plan, batch_tokens).map_err(|e| {
        anyhow!(
            "{e}: {:.0} specialized tokens needed, {} available",
            plan.specialized_consumed,
            plan.specialized_available_tokens
        )
    })?;
    info!(
        "{} batches, {} specialized, {:.0} specialized tokens",
        manifest.len(),
        manifest.specialized_count(),
        plan.specialized_consumed
    );
    let mut out = create(&a.out)?;
    manifest.write_jsonl(&mut out)?;
    out.flush()?;
    let rc = RunConfig::new(
        "schedule",
        json!({
            "total_tokens": a.total_tokens,
            "start_tokens": a.start_tokens,
            "weight": plan.mixture_weight,
            "available": a.available,
            "batch_tokens": batch_tokens,
            "continued": a.continued,
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out])
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (values, fixed) = match a.axis {
        SweepAxis::Timing => {
            let weight = a.weight.ok_or_else(|| anyhow!("a timing sweep needs --weight"))?;
            let starts = a
                .values
                .iter()
                .map(|v| parse_tokens(v).map_err(|e| anyhow!(e)))
                .collect::<Result<Vec<_>>>()?;
            (
                SweepValues::Timing(starts),
                SweepBase {
                    total_tokens: a.total_tokens,
                    start_tokens: 0,
                    weight,
                    available: a.available,
                },
            )
        }
        SweepAxis::Weight => {
            let start = a
                .start_tokens
                .ok_or_else(|| anyhow!("a weight sweep needs --start-tokens"))?;
            let weights = a
                .values
                .iter()
                .map(|v| crate::config::parse_unit_interval(v).map_err(|e| anyhow!(e)))
                .collect::<Result<Vec<_>>>()?;
            (
                SweepValues::Weight(weights),
                SweepBase {
                    total_tokens: a.total_tokens,
                    start_tokens: start,
                    weight: 0.0,
                    available: a.available,
                },
            )
        }
    };
    let plans = generate_sweep(&values, &fixed)?;
    let infeasible = plans.iter().filter(|p| !p.is_feasible()).count();
    if infeasible > 0 {
        warn!("{infeasible} of {} plans risk repeating specialized data", plans.len());
    }
    let rc = RunConfig::new(
        "sweep",
        json!({
            "sweep": values,
            "fixed": fixed,
            "out": a.out.display().to_string(),
        }),
    );
    let doc = json!({
        "tool": rc.tool,
        "version": rc.version,
        "sweep": values,
        "fixed": fixed,
        "plans": plans,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_all(&a.out, text.as_bytes())?;
    provenance(&rc, &[&a.out])
}

fn preset(a: PresetArgs) -> Result<()> {
    let model = a.model.parse()?;
    let phase = a.phase.parse()?;
    let doc = emit_training_preset(model, phase, a.dataset.as_deref())?;
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_all(&a.out, text.as_bytes())?;
    let rc = RunConfig::new(
        "preset",
        json!({
            "model": a.model,
            "phase": a.phase,
            "dataset": a.dataset,
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out])
}

fn cka_cmd(a: CkaArgs) -> Result<()> {
    let states = a
        .states
        .iter()
        .map(|(name, dir)| ModelState::load_dir(dir, name, &a.probe))
        .collect::<Result<Vec<_>, _>>()?;
    let comparisons = cka::cka_state_matrix(&states, &a.probe)?;
    cka::write_comparisons_csv(create(&a.out)?, &comparisons)?;
    let diagonal = companion(&a.out, "diagonal");
    cka::write_diagonal_csv(create(&diagonal)?, &comparisons)?;
    let rc = RunConfig::new(
        "cka",
        json!({
            "states": a.states.iter().map(|(n, d)| json!([n, d.display().to_string()])).collect::<Vec<_>>(),
            "probe": a.probe,
            "out": a.out.display().to_string(),
        }),
    );
    provenance(&rc, &[&a.out, &diagonal])
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let records = report::read_ledger(open(&a.losses)?).with_context(|| format!("reading {}", a.losses.display()))?;
    let rows = report::aggregate(&records)?;
    write_all(&a.out, report::emit_table(&rows, a.format).as_bytes())?;
    let mut outputs = vec![a.out.clone()];
    if let Some(control) = &a.control {
        let deltas = report::forgetting_delta(&records, control)?;
        let path = companion(&a.out, "forgetting");
        report::write_forgetting_csv(create(&path)?, &deltas)?;
        outputs.push(path);
    }
    let rc = RunConfig::new(
        "report",
        json!({
            "losses": a.losses.display().to_string(),
            "control": a.control,
            "format": match a.format {
                mixplan_core::TableFormat::Markdown => "markdown",
                mixplan_core::TableFormat::Csv => "csv",
            },
            "out": a.out.display().to_string(),
        }),
    );
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    provenance(&rc, &refs)
}

fn figure(a: FigureArgs, config: &FileConfig) -> Result<()> {
    let threshold = a
        .grey_threshold
        .or(config.grey_threshold)
        .unwrap_or(planner::DEFAULT_GREY_THRESHOLD);
    let written = render_figure(a.kind, &a.input, &a.out, threshold)?;
    let rc = RunConfig::new(
        "figure",
        json!({
            "kind": a.kind.id(),
            "input": a.input.display().to_string(),
            "grey_threshold": threshold,
            "out": a.out.display().to_string(),
        }),
    );
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    provenance(&rc, &refs)
}
