//! Straightforward reimplementations used as test oracles. Nothing here calls
//! into the library's algorithms.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn words(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in lower.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Brute-force bottom-k: score every non-empty document, sort all of them,
/// keep the first `k`, count tokens. `files[i][j]` is line `j + 1` of file `i`.
pub fn reservoir_counts(files: &[Vec<String>], seed: u64, k: usize) -> BTreeMap<String, u64> {
    let sub = seed ^ fnv1a(b"reservoir");
    let mut scored = Vec::new();
    for (fi, lines) in files.iter().enumerate() {
        for (li, line) in lines.iter().enumerate() {
            let toks = words(line);
            if toks.is_empty() {
                continue;
            }
            let lineno = li as u64 + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(sub);
            rng.set_stream(fi as u64);
            rng.set_word_pos(u128::from(lineno) * 2);
            scored.push(((rng.next_u64(), fi, lineno), toks));
        }
    }
    scored.sort_by_key(|a| a.0);
    let mut counts = BTreeMap::new();
    for (_, toks) in scored.into_iter().take(k) {
        for t in toks {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

pub type Dist = HashMap<String, f64>;

pub fn normalize(counts: &BTreeMap<String, u64>) -> Dist {
    let total: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(t, c)| (t.clone(), *c as f64 / total as f64))
        .collect()
}

pub fn mix(parts: &[(&Dist, f64)]) -> Dist {
    let vocab: HashSet<&String> = parts
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .flat_map(|(d, _)| d.keys())
        .collect();
    vocab
        .into_iter()
        .map(|t| {
            let p: f64 = parts.iter().map(|(d, w)| w * d.get(t).copied().unwrap_or(0.0)).sum();
            (t.clone(), p)
        })
        .collect()
}

fn support(d: &Dist) -> HashSet<&String> {
    d.iter().filter(|(_, p)| **p > 0.0).map(|(t, _)| t).collect()
}

pub fn jaccard(a: &Dist, b: &Dist) -> f64 {
    let (sa, sb) = (support(a), support(b));
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

pub fn overlap_ratio(a: &Dist, b: &Dist) -> f64 {
    let (sa, sb) = (support(a), support(b));
    sa.intersection(&sb).count() as f64 / sa.len().min(sb.len()) as f64
}

pub fn cosine(a: &Dist, b: &Dist) -> f64 {
    let dot: f64 = a.iter().map(|(t, p)| p * b.get(t).copied().unwrap_or(0.0)).sum();
    let na: f64 = a.values().map(|p| p * p).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|p| p * p).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn js_divergence(a: &Dist, b: &Dist) -> f64 {
    let vocab: HashSet<&String> = a.keys().chain(b.keys()).collect();
    let mut kl_a = 0.0;
    let mut kl_b = 0.0;
    for t in vocab {
        let pa = a.get(t).copied().unwrap_or(0.0);
        let pb = b.get(t).copied().unwrap_or(0.0);
        let m = 0.5 * (pa + pb);
        if pa > 0.0 {
            kl_a += pa * (pa / m).ln() / std::f64::consts::LN_2;
        }
        if pb > 0.0 {
            kl_b += pb * (pb / m).ln() / std::f64::consts::LN_2;
        }
    }
    0.5 * kl_a + 0.5 * kl_b
}

pub struct Score {
    pub jaccard: f64,
    pub overlap_ratio: f64,
    pub cosine: f64,
    pub js_similarity: f64,
    pub combined: f64,
}

pub fn score(a: &Dist, b: &Dist) -> Score {
    let j = jaccard(a, b);
    let c = cosine(a, b);
    let js = 1.0 - js_divergence(a, b);
    Score {
        jaccard: j,
        overlap_ratio: overlap_ratio(a, b),
        cosine: c,
        js_similarity: js,
        combined: 0.4 * c + 0.3 * j + 0.3 * js,
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// `⟨HKxH, HKyH⟩_F / (‖HKxH‖_F ‖HKyH‖_F)` with `K = X Xᵀ`, all by loops.
/// Rows of `x` and `y` are examples.
pub fn cka_gram(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let gram = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                k[i][j] = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
            }
        }
        k
    };
    let center = |k: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let nf = n as f64;
        let row: Vec<f64> = (0..n).map(|i| k[i].iter().sum::<f64>() / nf).collect();
        let col: Vec<f64> = (0..n).map(|j| (0..n).map(|i| k[i][j]).sum::<f64>() / nf).collect();
        let all: f64 = row.iter().sum::<f64>() / nf;
        let mut c = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                c[i][j] = k[i][j] - row[i] - col[j] + all;
            }
        }
        c
    };
    let kx = center(gram(x));
    let ky = center(gram(y));
    let dot = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i][j] * b[i][j];
            }
        }
        s
    };
    dot(&kx, &ky) / (dot(&kx, &kx).sqrt() * dot(&ky, &ky).sqrt())
}
