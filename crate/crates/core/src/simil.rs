//! Distributional similarity between unigram token distributions.
//!
//! Four statistics are computed per pair:
//!
//! - vocabulary Jaccard `|V_a ∩ V_b| / |V_a ∪ V_b|`,
//! - overlap ratio `|V_a ∩ V_b| / min(|V_a|, |V_b|)`,
//! - cosine of the probability vectors,
//! - Jensen–Shannon similarity `1 − JSD` with base-2 logarithms.
//!
//! The combined score is `0.4·cosine + 0.3·jaccard + 0.3·js_similarity`; the
//! overlap ratio is reported but carries no weight. Every statistic is exactly
//! symmetric in its arguments: all sums run over the merged vocabulary in
//! token order and every per-token term is built from commutative operations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::iter::Peekable;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{mix_distributions, CorpusError, MixtureSpec, TokenDistribution};

pub const COSINE_WEIGHT: f64 = 0.4;
pub const JACCARD_WEIGHT: f64 = 0.3;
pub const JS_WEIGHT: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SimilError {
    #[error("mixture `{mixture}` references unknown distribution `{component}`")]
    UnresolvedComponent { mixture: String, component: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("malformed matrix CSV: {0}")]
    MalformedMatrix(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The statistic a [`SimilarityMatrix`] is filled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Combined,
    Cosine,
    Jaccard,
    JsSimilarity,
    OverlapRatio,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Combined,
        Metric::Cosine,
        Metric::Jaccard,
        Metric::JsSimilarity,
        Metric::OverlapRatio,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Metric::Combined => "combined",
            Metric::Cosine => "cosine",
            Metric::Jaccard => "jaccard",
            Metric::JsSimilarity => "js-similarity",
            Metric::OverlapRatio => "overlap-ratio",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub jaccard: f64,
    pub overlap_ratio: f64,
    pub cosine: f64,
    pub js_similarity: f64,
    pub combined: f64,
}

impl SimilarityScore {
    /// Score of a distribution against itself.
    pub const IDENTICAL: SimilarityScore = SimilarityScore {
        jaccard: 1.0,
        overlap_ratio: 1.0,
        cosine: 1.0,
        js_similarity: 1.0,
        combined: 1.0,
    };

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Combined => self.combined,
            Metric::Cosine => self.cosine,
            Metric::Jaccard => self.jaccard,
            Metric::JsSimilarity => self.js_similarity,
            Metric::OverlapRatio => self.overlap_ratio,
        }
    }
}

/// `COSINE_WEIGHT·cosine + JACCARD_WEIGHT·jaccard + JS_WEIGHT·js`.
pub fn combine(cosine: f64, jaccard: f64, js_similarity: f64) -> f64 {
    COSINE_WEIGHT * cosine + JACCARD_WEIGHT * jaccard + JS_WEIGHT * js_similarity
}

/// Merge-join over two sorted vocabularies, yielding `(p_a(t), p_b(t))` for
/// every token of the union.
struct UnionPairs<'a, A, B>
where
    A: Iterator<Item = (&'a String, &'a f64)>,
    B: Iterator<Item = (&'a String, &'a f64)>,
{
    a: Peekable<A>,
    b: Peekable<B>,
}

impl<'a, A, B> Iterator for UnionPairs<'a, A, B>
where
    A: Iterator<Item = (&'a String, &'a f64)>,
    B: Iterator<Item = (&'a String, &'a f64)>,
{
    type Item = (f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let order = match (self.a.peek(), self.b.peek()) {
            (None, None) => return None,
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (Some((ta, _)), Some((tb, _))) => ta.cmp(tb),
        };
        Some(match order {
            Ordering::Less => (*self.a.next()?.1, 0.0),
            Ordering::Greater => (0.0, *self.b.next()?.1),
            Ordering::Equal => (*self.a.next()?.1, *self.b.next()?.1),
        })
    }
}

fn union_pairs<'a>(a: &'a TokenDistribution, b: &'a TokenDistribution) -> impl Iterator<Item = (f64, f64)> + 'a {
    UnionPairs {
        a: a.probs().iter().peekable(),
        b: b.probs().iter().peekable(),
    }
}

/// `(|V_a ∩ V_b|, |V_a ∪ V_b|)`.
fn vocab_overlap(a: &TokenDistribution, b: &TokenDistribution) -> (usize, usize) {
    union_pairs(a, b).fold((0, 0), |(shared, union), (pa, pb)| {
        (shared + usize::from(pa > 0.0 && pb > 0.0), union + 1)
    })
}

pub fn jaccard(a: &TokenDistribution, b: &TokenDistribution) -> f64 {
    let (shared, union) = vocab_overlap(a, b);
    shared as f64 / union as f64
}

pub fn overlap_ratio(a: &TokenDistribution, b: &TokenDistribution) -> f64 {
    let (shared, _) = vocab_overlap(a, b);
    shared as f64 / a.vocab_size().min(b.vocab_size()) as f64
}

pub fn cosine(a: &TokenDistribution, b: &TokenDistribution) -> f64 {
    let (dot, aa, bb) = union_pairs(a, b).fold((0.0, 0.0, 0.0), |(dot, aa, bb), (pa, pb)| {
        (dot + pa * pb, aa + pa * pa, bb + pb * pb)
    });
    // sqrt(x·x) == x in IEEE arithmetic, so a == b gives exactly 1.
    (dot / (aa * bb).sqrt()).clamp(0.0, 1.0)
}

/// Jensen–Shannon divergence in bits, in `[0, 1]`.
pub fn js_divergence(a: &TokenDistribution, b: &TokenDistribution) -> f64 {
    fn term(p: f64, m: f64) -> f64 {
        if p > 0.0 {
            p * (p / m).log2()
        } else {
            0.0
        }
    }
    let total: f64 = union_pairs(a, b)
        .map(|(pa, pb)| {
            let m = (pa + pb) * 0.5;
            term(pa, m) + term(pb, m)
        })
        .sum();
    (0.5 * total).clamp(0.0, 1.0)
}

pub fn js_similarity(a: &TokenDistribution, b: &TokenDistribution) -> f64 {
    1.0 - js_divergence(a, b)
}

/// All four statistics and the combined score.
pub fn combined_similarity(a: &TokenDistribution, b: &TokenDistribution) -> SimilarityScore {
    let jaccard = jaccard(a, b);
    let overlap_ratio = overlap_ratio(a, b);
    let cosine = cosine(a, b);
    let js_similarity = js_similarity(a, b);
    SimilarityScore {
        jaccard,
        overlap_ratio,
        cosine,
        js_similarity,
        combined: combine(cosine, jaccard, js_similarity).clamp(0.0, 1.0),
    }
}

/// `1 − combined`.
pub fn distance(a: &TokenDistribution, b: &TokenDistribution) -> f64 {
    1.0 - combined_similarity(a, b).combined
}

/// A row of a similarity matrix: either a plain distribution or a mixture
/// that is materialized before scoring.
#[derive(Debug, Clone, Copy)]
pub enum MatrixRow<'a> {
    Distribution(&'a TokenDistribution),
    Mixture(&'a MixtureSpec),
}

/// Dense `rows × cols` matrix of one similarity statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub metric: Metric,
    pub entries: Vec<Vec<f64>>,
    /// Full per-cell statistics; absent when the matrix was read from CSV.
    pub scores: Option<Vec<Vec<SimilarityScore>>>,
    /// Free-form provenance (tokenizer, sample seeds).
    pub metadata: BTreeMap<String, String>,
}

impl SimilarityMatrix {
    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.row_names.iter().position(|r| r == name)
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.col_names.iter().position(|c| c == name)
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        Some(self.entries[self.row_index(row)?][self.col_index(col)?])
    }

    /// Writes the matrix as CSV. The corner cell holds the metric id, the
    /// first row and column hold names and cells have six decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimilError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.metric.id().to_owned()];
        header.extend(self.col_names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.row_names.iter().zip(&self.entries) {
            let mut record = vec![name.clone()];
            record.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `row,col,jaccard,overlap_ratio,cosine,js_similarity,combined`.
    pub fn write_components_csv<W: Write>(&self, out: W) -> Result<(), SimilError> {
        let scores = self
            .scores
            .as_ref()
            .ok_or_else(|| SimilError::MalformedMatrix("matrix carries no per-component scores".into()))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "row",
            "col",
            "jaccard",
            "overlap_ratio",
            "cosine",
            "js_similarity",
            "combined",
        ])?;
        for (r, row) in self.row_names.iter().zip(scores) {
            for (c, s) in self.col_names.iter().zip(row) {
                w.write_record([
                    r.clone(),
                    c.clone(),
                    format!("{:.6}", s.jaccard),
                    format!("{:.6}", s.overlap_ratio),
                    format!("{:.6}", s.cosine),
                    format!("{:.6}", s.js_similarity),
                    format!("{:.6}", s.combined),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SimilError> {
        let bad = |m: String| SimilError::MalformedMatrix(m);
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut records = r.records();
        let header = records.next().ok_or_else(|| bad("empty file".into()))??;
        let metric: Metric = header.get(0).unwrap_or_default().parse().map_err(|e: String| bad(e))?;
        let col_names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut row_names = Vec::new();
        let mut entries = Vec::new();
        for record in records {
            let record = record?;
            if record.len() != col_names.len() + 1 {
                return Err(bad(format!(
                    "row `{}` has {} cells, expected {}",
                    &record[0],
                    record.len() - 1,
                    col_names.len()
                )));
            }
            row_names.push(record[0].to_owned());
            let row = record
                .iter()
                .skip(1)
                .map(|cell| {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| bad(format!("bad cell `{cell}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            entries.push(row);
        }
        Ok(Self {
            row_names,
            col_names,
            metric,
            entries,
            scores: None,
            metadata: BTreeMap::new(),
        })
    }
}

/// Scores every row against every column.
///
/// Mixture rows are resolved against `pool` by component name and
/// materialized with [`mix_distributions`]. A cell whose row and column share
/// a name is set to exactly 1.
pub fn similarity_matrix(
    rows: &[MatrixRow<'_>],
    cols: &[&TokenDistribution],
    pool: &[&TokenDistribution],
    metric: Metric,
) -> Result<SimilarityMatrix, SimilError> {
    let by_name: HashMap<&str, &TokenDistribution> = pool.iter().map(|d| (d.name(), *d)).collect();
    let mut materialized: Vec<TokenDistribution> = Vec::new();
    let mut row_dists: Vec<Option<&TokenDistribution>> = Vec::with_capacity(rows.len());
    for row in rows {
        match row {
            MatrixRow::Distribution(d) => row_dists.push(Some(*d)),
            MatrixRow::Mixture(spec) => {
                let components = spec
                    .components
                    .iter()
                    .map(|c| {
                        by_name
                            .get(c.component.as_str())
                            .map(|d| (*d, c.weight))
                            .ok_or_else(|| SimilError::UnresolvedComponent {
                                mixture: spec.name.clone(),
                                component: c.component.clone(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                materialized.push(mix_distributions(&spec.name, &components)?);
                row_dists.push(None);
            }
        }
    }
    let mut mixed = materialized.iter();
    let row_dists: Vec<&TokenDistribution> = row_dists
        .into_iter()
        .map(|d| d.unwrap_or_else(|| mixed.next().expect("one materialized mixture per row")))
        .collect();

    let n_cols = cols.len();
    let cells: Vec<SimilarityScore> = (0..row_dists.len() * n_cols)
        .into_par_iter()
        .map(|k| {
            let (r, c) = (row_dists[k / n_cols], cols[k % n_cols]);
            if r.name() == c.name() {
                SimilarityScore::IDENTICAL
            } else {
                combined_similarity(r, c)
            }
        })
        .collect();
    let scores: Vec<Vec<SimilarityScore>> = if n_cols == 0 {
        vec![Vec::new(); row_dists.len()]
    } else {
        cells.chunks(n_cols).map(<[_]>::to_vec).collect()
    };
    let entries = scores
        .iter()
        .map(|row| row.iter().map(|s| s.get(metric)).collect())
        .collect();
    Ok(SimilarityMatrix {
        row_names: row_dists.iter().map(|d| d.name().to_owned()).collect(),
        col_names: cols.iter().map(|d| d.name().to_owned()).collect(),
        metric,
        entries,
        scores: Some(scores),
        metadata: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probs(name: &str, pairs: &[(&str, f64)]) -> TokenDistribution {
        TokenDistribution::from_probs(name, pairs.iter().map(|(t, p)| (t.to_string(), *p)).collect()).unwrap()
    }

    fn vocab(name: &str, tokens: &[&str]) -> TokenDistribution {
        TokenDistribution::from_counts(name, tokens.iter().map(|t| (t.to_string(), 1)).collect()).unwrap()
    }

    #[test]
    fn jaccard_cases() {
        let abc = vocab("x", &["a", "b", "c"]);
        let bcd = vocab("y", &["b", "c", "d"]);
        let ef = vocab("z", &["e", "f"]);
        assert_eq!(jaccard(&abc, &abc), 1.0);
        assert_eq!(jaccard(&abc, &ef), 0.0);
        assert_eq!(jaccard(&abc, &bcd), 0.5);
    }

    #[test]
    fn overlap_cases() {
        let abc = vocab("x", &["a", "b", "c"]);
        let bcd = vocab("y", &["b", "c", "d"]);
        let ab = vocab("w", &["a", "b"]);
        assert_eq!(overlap_ratio(&ab, &abc), 1.0);
        assert_eq!(overlap_ratio(&ab, &vocab("z", &["q"])), 0.0);
        assert_eq!(overlap_ratio(&abc, &bcd), 2.0 / 3.0);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn worked_pair() {
        // p = (0.5, 0.5), q = (1, 0).
        let p = probs("p", &[("t1", 0.5), ("t2", 0.5)]);
        let q = probs("q", &[("t1", 1.0)]);
        let s = combined_similarity(&p, &q);
        // cos = 0.5 / sqrt(0.5); JSD = 1.5 - 0.75·log2(3).
        let cos = 0.5 / 0.5f64.sqrt();
        let js = 1.0 - (1.5 - 0.75 * 3f64.log2());
        assert!((s.cosine - cos).abs() < 1e-15);
        assert!((s.js_similarity - js).abs() < 1e-15);
        assert!((s.cosine - 0.70711).abs() < 1e-5);
        assert!((s.js_similarity - 0.68872).abs() < 1e-5);
        assert_eq!(s.jaccard, 0.5);
        assert!((s.combined - 0.63946).abs() < 1e-4);
    }

    #[test]
    fn disjoint_and_identical() {
        let a = probs("a", &[("x", 0.25), ("y", 0.75)]);
        let b = probs("b", &[("z", 1.0)]);
        let s = combined_similarity(&a, &b);
        assert_eq!(s.cosine, 0.0);
        assert_eq!(s.jaccard, 0.0);
        assert!(s.js_similarity.abs() < 1e-15);
        assert!(s.combined.abs() < 1e-15);
        let s = combined_similarity(&a, &a);
        assert_eq!(s.cosine, 1.0);
        assert_eq!(s.js_similarity, 1.0);
        assert!((s.combined - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_with_mixture_rows() {
        let c4 = probs("c4", &[("the", 0.6), ("cat", 0.4)]);
        let code = probs("code", &[("def", 0.5), ("return", 0.5)]);
        let pycode = probs("pycode", &[("def", 0.4), ("return", 0.3), ("the", 0.3)]);
        let mix = MixtureSpec::new("mix", [("code", 0.3), ("c4", 0.7)]).unwrap();
        let rows = [MatrixRow::Distribution(&c4), MatrixRow::Mixture(&mix)];
        let cols = [&c4, &pycode];
        let pool = [&c4, &code, &pycode];
        let m = similarity_matrix(&rows, &cols, &pool, Metric::Combined).unwrap();
        assert_eq!(m.row_names, ["c4", "mix"]);
        assert_eq!(m.entries[0][0], 1.0);
        assert!(m.get("mix", "pycode").unwrap() > m.get("c4", "pycode").unwrap());
    }

    #[test]
    fn unresolved_mixture_component() {
        let c4 = probs("c4", &[("the", 1.0)]);
        let mix = MixtureSpec::new("mix", [("code", 0.2), ("c4", 0.8)]).unwrap();
        let err = similarity_matrix(&[MatrixRow::Mixture(&mix)], &[&c4], &[&c4], Metric::Combined).unwrap_err();
        assert!(matches!(err, SimilError::UnresolvedComponent { ref component, .. } if component == "code"));
    }

    #[test]
    fn singleton_matrix() {
        let a = probs("a", &[("x", 1.0)]);
        let m = similarity_matrix(&[MatrixRow::Distribution(&a)], &[&a], &[&a], Metric::Combined).unwrap();
        assert_eq!(m.entries, vec![vec![1.0]]);
    }

    #[test]
    fn csv_round_trip_quantizes_to_six_places() {
        let a = probs("a", &[("x", 0.3), ("y", 0.7)]);
        let b = probs("b", &[("x", 0.9), ("z", 0.1)]);
        let m = similarity_matrix(
            &[MatrixRow::Distribution(&a), MatrixRow::Distribution(&b)],
            &[&a, &b],
            &[&a, &b],
            Metric::Cosine,
        )
        .unwrap();
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("cosine,a,b\na,1.000000,"));
        let back = SimilarityMatrix::read_csv(out.as_slice()).unwrap();
        assert_eq!(back.metric, Metric::Cosine);
        assert_eq!(back.row_names, m.row_names);
        for (r0, r1) in m.entries.iter().zip(&back.entries) {
            for (v0, v1) in r0.iter().zip(r1) {
                assert!((v0 - v1).abs() <= 5e-7);
            }
        }
        let mut comps = Vec::new();
        m.write_components_csv(&mut comps).unwrap();
        assert_eq!(String::from_utf8(comps).unwrap().lines().count(), 5);
    }

    #[test]
    fn read_csv_rejects_ragged_rows() {
        let text = "combined,a,b\na,1.0\n";
        assert!(SimilarityMatrix::read_csv(text.as_bytes()).is_err());
        assert!(SimilarityMatrix::read_csv("nope,a\na,1\n".as_bytes()).is_err());
    }

    fn arb_dist(name: &'static str) -> impl Strategy<Value = TokenDistribution> {
        proptest::collection::btree_map("[a-j]", 1u64..100, 1..10)
            .prop_map(move |c| TokenDistribution::from_counts(name, c).unwrap())
    }

    proptest! {
        #[test]
        fn statistics_are_symmetric_and_bounded(a in arb_dist("a"), b in arb_dist("b")) {
            let ab = combined_similarity(&a, &b);
            let ba = combined_similarity(&b, &a);
            prop_assert_eq!(ab, ba);
            for m in Metric::ALL {
                prop_assert!((0.0..=1.0).contains(&ab.get(m)));
            }
            let direct = 0.4 * ab.cosine + 0.3 * ab.jaccard + 0.3 * ab.js_similarity;
            prop_assert!((ab.combined - direct).abs() <= 1e-12);
        }

        #[test]
        fn mixing_toward_target_raises_jaccard_and_js(a in arb_dist("a"), b in arb_dist("b")) {
            let base_j = jaccard(&a, &b);
            let mut last_js = js_similarity(&a, &b);
            for step in 1..10 {
                let w = f64::from(step) / 10.0;
                let m = mix_distributions("m", &[(&a, 1.0 - w), (&b, w)]).unwrap();
                prop_assert!(jaccard(&m, &b) >= base_j);
                let js = js_similarity(&m, &b);
                prop_assert!(js >= last_js - 1e-12);
                last_js = js;
            }
        }
    }
}
