//! Linear centered kernel alignment between layer activations.
//!
//! For column-centered `X (n×p)` and `Y (n×q)`:
//!
//! ```text
//! CKA(X, Y) = ‖XᵀY‖²_F / (‖XᵀX‖_F · ‖YᵀY‖_F)
//!           = ⟨XXᵀ, YYᵀ⟩_F / (‖XXᵀ‖_F · ‖YYᵀ‖_F)
//! ```
//!
//! The feature-space form costs `O(n·p·q)` and the Gram form `O(n²·(p+q))`;
//! the cheaper one is picked per pair. Both forms are exposed so they can be
//! checked against each other.

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"ACTV";
const DUMP_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum CkaError {
    #[error("example counts differ: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("activations are constant; CKA is undefined")]
    DegenerateActivations,
    #[error("activations contain NaN or infinite values")]
    NonFiniteInput,
    #[error("probe mismatch: {0}")]
    ProbeMismatch(String),
    #[error("states have different layer counts: `{state}` has {found}, expected {expected}")]
    LayerCountMismatch {
        state: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid activation matrix: {0}")]
    InvalidActivations(String),
    #[error("malformed activation dump {}: {reason}", path.display())]
    MalformedDump { path: PathBuf, reason: String },
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Content hash of the ordered probe example identifiers.
pub fn probe_hash<S: AsRef<str>>(example_ids: &[S]) -> u64 {
    let mut hasher = FnvHasher::default();
    for id in example_ids {
        hasher.write(id.as_ref().as_bytes());
        hasher.write_u8(0);
    }
    hasher.finish()
}

/// Activations of one layer of one model state on one probe set; rows are
/// probe examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    pub state: String,
    pub layer: usize,
    pub probe: String,
    pub probe_hash: u64,
    data: Array2<f64>,
}

impl ActivationMatrix {
    pub fn new(
        state: impl Into<String>,
        layer: usize,
        probe: impl Into<String>,
        probe_hash: u64,
        data: Array2<f64>,
    ) -> Result<Self, CkaError> {
        if data.nrows() < 2 {
            return Err(CkaError::InvalidActivations(format!(
                "need at least 2 examples, got {}",
                data.nrows()
            )));
        }
        if data.ncols() < 1 {
            return Err(CkaError::InvalidActivations("no features".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CkaError::NonFiniteInput);
        }
        Ok(Self {
            state: state.into(),
            layer,
            probe: probe.into(),
            probe_hash,
            data,
        })
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn n_examples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    /// Writes the `ACTV` v1 dump: magic, version byte, `u32` examples,
    /// `u32` features, `u64` probe hash, then row-major little-endian `f32`.
    pub fn write_dump<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        let dim = |v: usize| u32::try_from(v).map_err(|_| std::io::Error::other("dimension exceeds u32"));
        out.write_all(MAGIC)?;
        out.write_all(&[DUMP_VERSION])?;
        out.write_all(&dim(self.n_examples())?.to_le_bytes())?;
        out.write_all(&dim(self.n_features())?.to_le_bytes())?;
        out.write_all(&self.probe_hash.to_le_bytes())?;
        for v in self.data.iter() {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_dump<R: Read>(
        mut input: R,
        state: &str,
        layer: usize,
        probe: &str,
        origin: &Path,
    ) -> Result<Self, CkaError> {
        let malformed = |reason: String| CkaError::MalformedDump {
            path: origin.to_owned(),
            reason,
        };
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|source| CkaError::Io {
            path: origin.to_owned(),
            source,
        })?;
        if bytes.len() < HEADER_LEN {
            return Err(malformed("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(malformed("bad magic".into()));
        }
        if bytes[4] != DUMP_VERSION {
            return Err(malformed(format!("unsupported version {}", bytes[4])));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (n, f) = (u32_at(5), u32_at(9));
        let hash = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if Some(body.len()) != n.checked_mul(f).and_then(|c| c.checked_mul(4)) {
            return Err(malformed(format!(
                "expected {n}×{f} f32 values, found {} bytes",
                body.len()
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let data = Array2::from_shape_vec((n, f), values).map_err(|e| malformed(e.to_string()))?;
        Self::new(state, layer, probe, hash, data)
    }
}

/// `<state>__layer<k>__<probe>.actv`
pub fn dump_file_name(state: &str, layer: usize, probe: &str) -> String {
    format!("{state}__layer{layer}__{probe}.actv")
}

/// Subtracts each column's mean.
pub fn center_columns(x: ArrayView2<'_, f64>) -> Result<Array2<f64>, CkaError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CkaError::NonFiniteInput);
    }
    let n = x.nrows() as f64;
    let means = x.sum_axis(Axis(0)) / n;
    Ok(&x - &means)
}

fn frobenius_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn check_rows(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(), CkaError> {
    if x.nrows() != y.nrows() {
        return Err(CkaError::ShapeMismatch {
            left: x.nrows(),
            right: y.nrows(),
        });
    }
    Ok(())
}

fn ratio(cross: f64, x_norm: f64, y_norm: f64) -> Result<f64, CkaError> {
    if x_norm == 0.0 || y_norm == 0.0 {
        return Err(CkaError::DegenerateActivations);
    }
    Ok(cross / (x_norm * y_norm))
}

/// Feature-space form; unclamped.
pub fn linear_cka_features(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64, CkaError> {
    check_rows(x, y)?;
    let (xc, yc) = (center_columns(x)?, center_columns(y)?);
    let cross = frobenius_sq(&xc.t().dot(&yc));
    let xx = frobenius_sq(&xc.t().dot(&xc)).sqrt();
    let yy = frobenius_sq(&yc.t().dot(&yc)).sqrt();
    ratio(cross, xx, yy)
}

/// Gram-matrix (HSIC) form; unclamped.
pub fn linear_cka_gram(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64, CkaError> {
    check_rows(x, y)?;
    let (xc, yc) = (center_columns(x)?, center_columns(y)?);
    let k = xc.dot(&xc.t());
    let l = yc.dot(&yc.t());
    let cross: f64 = k.iter().zip(l.iter()).map(|(a, b)| a * b).sum();
    ratio(cross, frobenius_sq(&k).sqrt(), frobenius_sq(&l).sqrt())
}

fn prefers_gram(n: usize, p: usize, q: usize) -> bool {
    p.max(q) >= n
}

/// Linear CKA of two raw activation arrays, clamped to `[0, 1]`.
pub fn linear_cka_arrays(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64, CkaError> {
    let value = if prefers_gram(x.nrows(), x.ncols(), y.ncols()) {
        linear_cka_gram(x, y)?
    } else {
        linear_cka_features(x, y)?
    };
    Ok(value.clamp(0.0, 1.0))
}

fn check_probe(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<(), CkaError> {
    if x.probe != y.probe || x.probe_hash != y.probe_hash {
        return Err(CkaError::ProbeMismatch(format!(
            "`{}` layer {} ({}, {:016x}) vs `{}` layer {} ({}, {:016x})",
            x.state, x.layer, x.probe, x.probe_hash, y.state, y.layer, y.probe, y.probe_hash
        )));
    }
    Ok(())
}

/// Linear CKA of two activation matrices recorded on the same probe.
pub fn linear_cka(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64, CkaError> {
    check_probe(x, y)?;
    linear_cka_arrays(x.data(), y.data())
}

/// Per-layer activations of one model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub name: String,
    pub layers: Vec<ActivationMatrix>,
}

impl ModelState {
    /// Loads every `<name>__layer<k>__<probe>.actv` in `dir`. Layer indices
    /// must be contiguous; they are returned in ascending order.
    pub fn load_dir(dir: &Path, name: &str, probe: &str) -> Result<Self, CkaError> {
        let io_err = |path: &Path| {
            let path = path.to_owned();
            move |source| CkaError::Io { path, source }
        };
        let prefix = format!("{name}__layer");
        let suffix = format!("__{probe}.actv");
        let mut found: Vec<(usize, PathBuf)> = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let file_name = entry.file_name();
            let Some(file_name) = file_name.to_str() else { continue };
            let Some(layer) = file_name
                .strip_prefix(&prefix)
                .and_then(|rest| rest.strip_suffix(&suffix))
                .and_then(|k| k.parse::<usize>().ok())
            else {
                continue;
            };
            found.push((layer, entry.path()));
        }
        found.sort();
        if found.is_empty() {
            return Err(CkaError::InvalidActivations(format!(
                "no `{prefix}<k>{suffix}` files in {}",
                dir.display()
            )));
        }
        if found.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
            return Err(CkaError::InvalidActivations(format!(
                "layer indices of `{name}` in {} are not contiguous",
                dir.display()
            )));
        }
        let layers = found
            .into_iter()
            .map(|(layer, path)| {
                let file = File::open(&path).map_err(io_err(&path))?;
                ActivationMatrix::read_dump(BufReader::new(file), name, layer, probe, &path)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name: name.to_owned(),
            layers,
        })
    }
}

/// Layer × layer CKA values between two states.
#[derive(Debug, Clone, PartialEq)]
pub struct CkaMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Array2<f64>,
}

impl CkaMatrix {
    /// Position of the largest entry in `row`, first on ties.
    pub fn argmax_in_row(&self, row: usize) -> usize {
        self.values
            .row(row)
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (j, v)| if *v > best.1 { (j, *v) } else { best },
            )
            .0
    }
}

/// CKA between every layer of `state_a` and every layer of `state_b`, plus
/// the same-layer diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StateComparison {
    pub state_a: String,
    pub state_b: String,
    pub layers: CkaMatrix,
    pub diagonal: Vec<f64>,
}

/// A centered layer together with the pieces its CKA denominators need.
struct Prepared {
    centered: Array2<f64>,
    gram: Option<Array2<f64>>,
    self_norm: f64,
}

impl Prepared {
    fn new(m: &ActivationMatrix) -> Result<Self, CkaError> {
        let centered = center_columns(m.data())?;
        let (gram, self_norm) = if m.n_features() >= m.n_examples() {
            let k = centered.dot(&centered.t());
            let norm = frobenius_sq(&k).sqrt();
            (Some(k), norm)
        } else {
            (None, frobenius_sq(&centered.t().dot(&centered)).sqrt())
        };
        if self_norm == 0.0 {
            return Err(CkaError::DegenerateActivations);
        }
        Ok(Self {
            centered,
            gram,
            self_norm,
        })
    }

    fn cka(&self, other: &Prepared) -> f64 {
        let cross = match (&self.gram, &other.gram) {
            (Some(k), Some(l)) => k.iter().zip(l.iter()).map(|(a, b)| a * b).sum(),
            _ => frobenius_sq(&self.centered.t().dot(&other.centered)),
        };
        (cross / (self.self_norm * other.self_norm)).clamp(0.0, 1.0)
    }
}

/// Compares every ordered pair of states (including each state with itself)
/// on `probe`.
pub fn cka_state_matrix(states: &[ModelState], probe: &str) -> Result<Vec<StateComparison>, CkaError> {
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let n_layers = first.layers.len();
    let reference = first
        .layers
        .first()
        .ok_or_else(|| CkaError::InvalidActivations(format!("state `{}` has no layers", first.name)))?;
    for state in states {
        if state.layers.len() != n_layers {
            return Err(CkaError::LayerCountMismatch {
                state: state.name.clone(),
                expected: n_layers,
                found: state.layers.len(),
            });
        }
        for layer in &state.layers {
            if layer.probe != probe {
                return Err(CkaError::ProbeMismatch(format!(
                    "`{}` layer {} was recorded on `{}`, expected `{probe}`",
                    state.name, layer.layer, layer.probe
                )));
            }
            check_probe(reference, layer)?;
            check_rows(reference.data(), layer.data())?;
        }
    }

    let prepared: Vec<Vec<Prepared>> = states
        .par_iter()
        .map(|s| s.layers.iter().map(Prepared::new).collect())
        .collect::<Result<_, _>>()?;

    let labels = |s: &ModelState| -> Vec<String> {
        s.layers
            .iter()
            .map(|l| format!("{}:layer{}", s.name, l.layer))
            .collect()
    };
    let pairs: Vec<(usize, usize)> = (0..states.len())
        .flat_map(|a| (0..states.len()).map(move |b| (a, b)))
        .collect();
    Ok(pairs
        .par_iter()
        .map(|&(a, b)| {
            let values = Array2::from_shape_fn((n_layers, n_layers), |(i, j)| prepared[a][i].cka(&prepared[b][j]));
            let diagonal = (0..n_layers).map(|i| values[(i, i)]).collect();
            StateComparison {
                state_a: states[a].name.clone(),
                state_b: states[b].name.clone(),
                layers: CkaMatrix {
                    row_labels: labels(&states[a]),
                    col_labels: labels(&states[b]),
                    values,
                },
                diagonal,
            }
        })
        .collect())
}

/// `1 − CKA` between the last layers of a state before and after finetuning.
pub fn final_layer_drift(before: &ModelState, after: &ModelState) -> Result<f64, CkaError> {
    let (Some(x), Some(y)) = (before.layers.last(), after.layers.last()) else {
        return Err(CkaError::InvalidActivations("state without layers".into()));
    };
    Ok(1.0 - linear_cka(x, y)?)
}

/// Writes `state_a,state_b,layer_a,layer_b,cka` rows for every comparison.
pub fn write_comparisons_csv<W: Write>(out: W, comparisons: &[StateComparison]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_a", "state_b", "layer_a", "layer_b", "cka"])?;
    for cmp in comparisons {
        for ((i, j), v) in cmp.layers.values.indexed_iter() {
            w.write_record([
                cmp.state_a.clone(),
                cmp.state_b.clone(),
                i.to_string(),
                j.to_string(),
                format!("{v:.8}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `state_a,state_b,layer,cka` for same-layer pairs.
pub fn write_diagonal_csv<W: Write>(out: W, comparisons: &[StateComparison]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_a", "state_b", "layer", "cka"])?;
    for cmp in comparisons {
        for (i, v) in cmp.diagonal.iter().enumerate() {
            w.write_record([
                cmp.state_a.clone(),
                cmp.state_b.clone(),
                i.to_string(),
                format!("{v:.8}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
