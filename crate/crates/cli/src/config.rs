//! Config file defaults, provenance sidecars and numeric argument parsing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Defaults read from `--config <file>`; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tokenizer: Option<String>,
    pub threads: Option<usize>,
    pub sample: Option<usize>,
    pub permutations: Option<usize>,
    pub batch_tokens: Option<u64>,
    pub grey_threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Resolved parameters of one invocation, written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub params: Value,
}

impl RunConfig {
    pub fn new(command: &str, params: Value) -> Self {
        Self {
            tool: "mixplan",
            version: mixplan_core::TOOL_VERSION,
            command: command.to_owned(),
            params,
        }
    }

    /// `<output>.run.json`
    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".run.json");
        PathBuf::from(name)
    }

    pub fn write_for(&self, output: &Path) -> Result<()> {
        let path = Self::sidecar_path(output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Parses a token count such as `2097152`, `128e9` or `12.6e9`.
pub fn parse_tokens(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    // Integers up to 2^53 are exact in f64.
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 9_007_199_254_740_992.0) {
        return Err(format!("`{s}` is not a whole, non-negative token count"));
    }
    Ok(v as u64)
}

pub fn parse_unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("`{s}` is outside [0, 1]"));
    }
    Ok(v)
}

/// `name=dir` pairs for `cka --state`.
pub fn parse_state(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_owned(), PathBuf::from(dir))),
        _ => Err(format!("expected `<name>=<dir>`, got `{s}`")),
    }
}

/// Thread count: `--threads`, then `MIXPLAN_THREADS` (handled by clap), then
/// the config file, then rayon's default of all cores.
pub fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        // A pool may already exist when running inside tests; that is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
