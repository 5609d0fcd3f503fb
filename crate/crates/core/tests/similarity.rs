#![allow(clippy::approx_constant)]

mod common {
    pub mod oracle;
}

use std::collections::BTreeMap;
use std::path::Path;

use common::oracle;
use mixplan_core::corpus::{ingest_corpus, mix_distributions};
use mixplan_core::simil::{
    combine, combined_similarity, cosine, jaccard, js_similarity, overlap_ratio, similarity_matrix, MatrixRow,
};
use mixplan_core::{CorpusSpec, InputFormat, Metric, MixtureSpec, TokenDistribution, Tokenizer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probs(name: &str, pairs: &[(&str, f64)]) -> TokenDistribution {
    TokenDistribution::from_probs(name, pairs.iter().map(|(t, p)| (t.to_string(), *p)).collect()).unwrap()
}

fn uniform(name: &str, vocab: &[&str]) -> TokenDistribution {
    let p = 1.0 / vocab.len() as f64;
    probs(name, &vocab.iter().map(|t| (*t, p)).collect::<Vec<_>>())
}

fn as_oracle(d: &TokenDistribution) -> oracle::Dist {
    d.probs().iter().map(|(t, p)| (t.clone(), *p)).collect()
}

#[test]
fn jaccard_examples() {
    let a = uniform("a", &["a", "b", "c"]);
    assert_eq!(jaccard(&a, &a), 1.0);
    assert_eq!(jaccard(&a, &uniform("z", &["x", "y"])), 0.0);
    assert_eq!(jaccard(&a, &uniform("b", &["b", "c", "d"])), 0.5);
}

#[test]
fn overlap_ratio_examples() {
    let a = uniform("a", &["a", "b"]);
    assert_eq!(overlap_ratio(&a, &uniform("b", &["a", "b", "c"])), 1.0);
    assert_eq!(overlap_ratio(&a, &uniform("z", &["x"])), 0.0);
    let r = overlap_ratio(&uniform("a", &["a", "b", "c"]), &uniform("b", &["b", "c", "d"]));
    assert!((r - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn worked_half_half_against_point_mass() {
    let a = probs("a", &[("t1", 0.5), ("t2", 0.5)]);
    let b = probs("b", &[("t1", 1.0)]);
    let (oa, ob) = (as_oracle(&a), as_oracle(&b));
    assert!((cosine(&a, &b) - 0.70711).abs() < 1e-5);
    assert!((js_similarity(&a, &b) - 0.68872).abs() < 1e-5);
    let s = combined_similarity(&a, &b);
    assert!((s.combined - 0.63946).abs() < 1e-4);
    let o = oracle::score(&oa, &ob);
    assert!((s.cosine - o.cosine).abs() < 1e-12);
    assert!((s.js_similarity - o.js_similarity).abs() < 1e-12);
    assert!((s.combined - o.combined).abs() < 1e-12);
}

#[test]
fn identical_and_disjoint() {
    let a = probs("a", &[("x", 0.3), ("y", 0.7)]);
    let s = combined_similarity(&a, &a);
    assert_eq!((s.cosine, s.jaccard, s.js_similarity, s.combined), (1.0, 1.0, 1.0, 1.0));
    let s = combined_similarity(&a, &probs("b", &[("z", 1.0)]));
    assert_eq!((s.cosine, s.jaccard, s.js_similarity, s.combined), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn one_by_one_matrix() {
    let a = probs("a", &[("x", 1.0)]);
    let m = similarity_matrix(&[MatrixRow::Distribution(&a)], &[&a], &[&a], Metric::Combined).unwrap();
    assert_eq!(m.entries, vec![vec![1.0]]);
}

fn random_dist(rng: &mut ChaCha8Rng, name: &str) -> TokenDistribution {
    let n = rng.gen_range(1..12);
    let mut counts = BTreeMap::new();
    for _ in 0..n {
        counts.insert(format!("t{}", rng.gen_range(0..16)), rng.gen_range(1..20u64));
    }
    TokenDistribution::from_counts(name, counts).unwrap()
}

#[test]
fn three_by_three_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ds: Vec<TokenDistribution> = (0..3).map(|i| random_dist(&mut rng, &format!("d{i}"))).collect();
    let refs: Vec<&TokenDistribution> = ds.iter().collect();
    let rows: Vec<MatrixRow<'_>> = ds.iter().map(MatrixRow::Distribution).collect();
    let m = similarity_matrix(&rows, &refs, &refs, Metric::Combined).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let o = oracle::score(&as_oracle(&ds[i]), &as_oracle(&ds[j]));
            assert!((m.entries[i][j] - o.combined).abs() < 1e-12, "{i},{j}");
        }
    }
}

/// Ingests the toy corpora shipped with the repository.
fn toy(name: &str, file: &str, format: InputFormat) -> TokenDistribution {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let spec = CorpusSpec {
        name: name.into(),
        inputs: vec![dir.join(file)],
        format,
        sample_limit: 10_000,
        seed: 0,
    };
    ingest_corpus(&spec, Tokenizer::UnicodeWords).unwrap()
}

#[test]
fn code_mixture_sits_closer_to_pycode_than_c4() {
    let c4 = toy("c4", "c4.txt", InputFormat::PlainText);
    let sc = toy("starcoder", "starcoder.txt", InputFormat::PlainText);
    let py = toy(
        "pycode",
        "pycode.jsonl",
        InputFormat::JsonLines { field: "text".into() },
    );
    let mix = MixtureSpec::new("mix", [("starcoder", 0.2), ("c4", 0.8)]).unwrap();
    let pool = [&c4, &sc, &py];
    let m = similarity_matrix(
        &[MatrixRow::Distribution(&c4), MatrixRow::Mixture(&mix)],
        &[&py],
        &pool,
        Metric::Combined,
    )
    .unwrap();
    assert!(m.get("mix", "pycode").unwrap() > m.get("c4", "pycode").unwrap());
}

#[test]
fn tiny_corpora_match_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let dir = tempfile::tempdir().unwrap();
    for case in 0..20 {
        let mut dists = Vec::new();
        for k in 0..3 {
            let docs: Vec<String> = (0..rng.gen_range(1..=100))
                .map(|_| {
                    (0..rng.gen_range(1..6))
                        .map(|_| format!("w{}", rng.gen_range(0..(10 + 5 * k))))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let path = dir.path().join(format!("c{case}_{k}.txt"));
            std::fs::write(&path, docs.join("\n")).unwrap();
            let spec = CorpusSpec {
                name: format!("d{k}"),
                inputs: vec![path],
                format: InputFormat::PlainText,
                sample_limit: 100,
                seed: case,
            };
            dists.push(ingest_corpus(&spec, Tokenizer::UnicodeWords).unwrap());
        }
        let w = rng.gen_range(0.05..0.95);
        let mix = MixtureSpec::new("mix", [("d1", w), ("d0", 1.0 - w)]).unwrap();
        let refs: Vec<&TokenDistribution> = dists.iter().collect();
        let rows: Vec<MatrixRow<'_>> = dists
            .iter()
            .map(MatrixRow::Distribution)
            .chain([MatrixRow::Mixture(&mix)])
            .collect();
        let m = similarity_matrix(&rows, &refs, &refs, Metric::Combined).unwrap();
        let scores = m.scores.as_ref().unwrap();

        let mut odists: Vec<oracle::Dist> = dists.iter().map(|d| oracle::normalize(d.counts().unwrap())).collect();
        let omix = oracle::mix(&[(&odists[1], w), (&odists[0], 1.0 - w)]);
        odists.push(omix);
        for (i, row) in odists.iter().enumerate() {
            for (j, col) in odists[..3].iter().enumerate() {
                let o = oracle::score(row, col);
                let s = &scores[i][j];
                for (got, want, what) in [
                    (s.jaccard, o.jaccard, "jaccard"),
                    (s.overlap_ratio, o.overlap_ratio, "overlap"),
                    (s.cosine, o.cosine, "cosine"),
                    (s.js_similarity, o.js_similarity, "js"),
                    (s.combined, o.combined, "combined"),
                ] {
                    assert!(
                        (got - want).abs() < 1e-12,
                        "case {case} ({i},{j}) {what}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

fn arb_dist(name: &'static str) -> impl Strategy<Value = TokenDistribution> {
    prop::collection::btree_map("[a-h]", 1u64..50, 1..8)
        .prop_map(move |c| TokenDistribution::from_counts(name, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn statistics_are_symmetric_and_bounded(a in arb_dist("a"), b in arb_dist("b")) {
        let ab = combined_similarity(&a, &b);
        let ba = combined_similarity(&b, &a);
        prop_assert_eq!(ab, ba);
        for v in [ab.jaccard, ab.overlap_ratio, ab.cosine, ab.js_similarity, ab.combined] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((ab.combined - combine(ab.cosine, ab.jaccard, ab.js_similarity)).abs() < 1e-12);
        prop_assert_eq!(combined_similarity(&a, &a).combined, 1.0);
    }

    #[test]
    fn mixing_toward_target_never_hurts(a in arb_dist("a"), t in arb_dist("t")) {
        let mut prev_js = js_similarity(&a, &t);
        for k in 1..=9 {
            let w = k as f64 / 10.0;
            let m = mix_distributions("m", &[(&t, w), (&a, 1.0 - w)]).unwrap();
            let (j, js) = (jaccard(&m, &t), js_similarity(&m, &t));
            prop_assert!(j >= jaccard(&a, &t));
            prop_assert!(js >= prev_js - 1e-12, "w={} {} < {}", w, js, prev_js);
            prev_js = js;
        }
    }
}
