#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/toy")
        .canonicalize()
        .unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/fixtures")
        .join(name)
}

pub fn mixplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixplan"))
        .args(args)
        .current_dir(dir)
        .env_remove("MIXPLAN_THREADS")
        .output()
        .expect("spawn mixplan")
}

pub fn ok(dir: &Path, args: &[&str]) {
    let out = mixplan(dir, args);
    assert!(
        out.status.success(),
        "mixplan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Whether a toy-pipeline output depends on the sampling seed.
pub fn sampling_dependent(name: &str) -> bool {
    name.contains(".udist") || name.starts_with("sim.") || name == "ranking.csv"
}

/// ingest → similarity → plan → schedule → report on the bundled corpora,
/// run inside `dir`. Returns every file produced, by name.
pub fn toy_pipeline(dir: &Path, seed: u64, threads: &str) -> BTreeMap<String, Vec<u8>> {
    let toy = toy_dir();
    let seed = seed.to_string();
    let t = |f: &str| toy.join(f).display().to_string();
    for (name, file, format) in [
        ("c4", "c4.txt", "txt"),
        ("starcoder", "starcoder.txt", "txt"),
        ("math", "math.txt", "txt"),
        ("pycode", "pycode.jsonl", "jsonl:text"),
        ("gsm8k", "gsm8k.jsonl", "jsonl:question"),
    ] {
        let out = format!("{name}.udist");
        ok(
            dir,
            &[
                "--threads",
                threads,
                "ingest",
                "--input",
                &t(file),
                "--format",
                format,
                "--sample",
                "60",
                "--seed",
                &seed,
                "--out",
                &out,
            ],
        );
    }
    ok(
        dir,
        &[
            "--threads",
            threads,
            "similarity",
            "--dists",
            "c4.udist",
            "starcoder.udist",
            "math.udist",
            "pycode.udist",
            "gsm8k.udist",
            "--mixes",
            &t("mixes.json"),
            "--out",
            "sim.csv",
        ],
    );
    ok(
        dir,
        &[
            "plan",
            "--matrix",
            "sim.csv",
            "--base",
            "c4",
            "--target",
            "pycode",
            "--candidates",
            "starcoder_mix",
            "math_mix",
            "--out",
            "ranking.csv",
        ],
    );
    ok(
        dir,
        &[
            "schedule",
            "--total-tokens",
            "128e9",
            "--start-tokens",
            "12.6e9",
            "--weight",
            "0.2",
            "--available",
            "196e9",
            "--batch-tokens",
            "2097152",
            "--out",
            "manifest.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "report",
            "--losses",
            &t("ledger.csv"),
            "--control",
            "C4",
            "--format",
            "markdown",
            "--out",
            "table.md",
        ],
    );
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        files.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    files
}
