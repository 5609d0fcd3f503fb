//! Proximity advantages, mixture rankings and permutation-tested correlation.
//!
//! The proximity advantage of a mixture over a base corpus for a target is
//! `dist(base, target) − dist(mixture, target)` with `dist = 1 − similarity`,
//! i.e. `sim(mixture, target) − sim(base, target)`. Positive values mean the
//! mixture sits closer to the target.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, PERMUTATION};
use crate::simil::SimilarityMatrix;

/// Pairs with `|advantage|` below this are greyed out in figures.
pub const DEFAULT_GREY_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("`{0}` is not a row of the similarity matrix")]
    UnknownRow(String),
    #[error("`{0}` is not a column of the similarity matrix")]
    UnknownColumn(String),
    #[error("base loss must be positive, got {0}")]
    NonpositiveBaseLoss(f64),
    #[error("degenerate correlation input: {0}")]
    DegenerateInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityAdvantage {
    pub base: String,
    pub mixture: String,
    pub target: String,
    pub advantage: f64,
}

impl ProximityAdvantage {
    pub fn is_near_zero(&self, threshold: f64) -> bool {
        self.advantage.abs() < threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: CorrelationMethod,
    pub seed: u64,
    pub permutations: usize,
}

fn lookup(matrix: &SimilarityMatrix, row: &str, col: usize) -> Result<f64, PlannerError> {
    let r = matrix
        .row_index(row)
        .ok_or_else(|| PlannerError::UnknownRow(row.to_owned()))?;
    Ok(matrix.entries[r][col])
}

pub fn proximity_advantage(
    matrix: &SimilarityMatrix,
    base: &str,
    mixture: &str,
    target: &str,
) -> Result<ProximityAdvantage, PlannerError> {
    let col = matrix
        .col_index(target)
        .ok_or_else(|| PlannerError::UnknownColumn(target.to_owned()))?;
    let base_sim = lookup(matrix, base, col)?;
    let mixture_sim = lookup(matrix, mixture, col)?;
    Ok(ProximityAdvantage {
        base: base.to_owned(),
        mixture: mixture.to_owned(),
        target: target.to_owned(),
        advantage: mixture_sim - base_sim,
    })
}

/// Candidates by descending advantage, ties by name.
pub fn rank_mixtures<S: AsRef<str>>(
    matrix: &SimilarityMatrix,
    base: &str,
    candidates: &[S],
    target: &str,
) -> Result<Vec<ProximityAdvantage>, PlannerError> {
    let mut ranked = candidates
        .iter()
        .map(|c| proximity_advantage(matrix, base, c.as_ref(), target))
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| {
        b.advantage
            .total_cmp(&a.advantage)
            .then_with(|| a.mixture.cmp(&b.mixture))
    });
    Ok(ranked)
}

/// Fractional loss reduction `(base − variant) / base`.
pub fn relative_improvement(loss_base: f64, loss_variant: f64) -> Result<f64, PlannerError> {
    if loss_base.is_nan() || loss_base <= 0.0 {
        return Err(PlannerError::NonpositiveBaseLoss(loss_base));
    }
    Ok((loss_base - loss_variant) / loss_base)
}

/// Pearson product-moment correlation. Returns `None` when either column has
/// zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (sxy, sxx, syy) = x.iter().zip(y).fold((0.0, 0.0, 0.0), |(sxy, sxx, syy), (xi, yi)| {
        let (dx, dy) = (xi - mx, yi - my);
        (sxy + dx * dy, sxx + dx * dx, syy + dy * dy)
    });
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Relative slack when comparing a permuted |r| against the observed one, so
/// permutations that merely reorder the summation still count as ties.
const TIE_SLACK: f64 = 1e-12;

/// Pearson r of `pairs` with a two-sided permutation p-value.
///
/// Permutation `j` shuffles the improvement column with a ChaCha8 stream
/// selected by `j`, so the result does not depend on how trials are spread
/// across threads. The p-value is add-one smoothed: `(k + 1) / (N + 1)`.
pub fn correlate(pairs: &[(f64, f64)], seed: u64, n_permutations: usize) -> Result<CorrelationResult, PlannerError> {
    if pairs.len() < 3 {
        return Err(PlannerError::DegenerateInput(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(PlannerError::DegenerateInput("non-finite value".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let r = pearson(&x, &y).ok_or_else(|| PlannerError::DegenerateInput("a column is constant".into()))?;

    let stream_seed = derive_seed(seed, PERMUTATION);
    let threshold = r.abs() * (1.0 - TIE_SLACK);
    let extreme = (0..n_permutations)
        .into_par_iter()
        .filter(|&j| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            rng.set_stream(j as u64);
            let mut shuffled = y.clone();
            shuffled.shuffle(&mut rng);
            pearson(&x, &shuffled).is_some_and(|rp| rp.abs() >= threshold)
        })
        .count();
    Ok(CorrelationResult {
        r,
        p_value: (extreme as f64 + 1.0) / (n_permutations as f64 + 1.0),
        n: pairs.len(),
        method: CorrelationMethod::Permutation,
        seed,
        permutations: n_permutations,
    })
}
