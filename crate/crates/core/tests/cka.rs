mod common {
    pub mod oracle;
}

use common::oracle;
use mixplan_core::cka::{
    center_columns, cka_state_matrix, dump_file_name, final_layer_drift, linear_cka_arrays, linear_cka_features,
    linear_cka_gram, probe_hash,
};
use mixplan_core::{ActivationMatrix, ModelState};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Random orthogonal matrix by Gram–Schmidt.
fn orthogonal(rng: &mut ChaCha8Rng, p: usize) -> Array2<f64> {
    let mut q = random(rng, p, p);
    for j in 0..p {
        for k in 0..j {
            let d = q.column(j).dot(&q.column(k));
            let qk = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-d, &qk);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

#[test]
fn centering() {
    let c = array![[1.0, -2.0], [-1.0, 2.0]];
    assert_eq!(center_columns(c.view()).unwrap(), c);
    let k = array![[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]];
    let out = center_columns(k.view()).unwrap();
    assert!(out.column(0).iter().all(|v| *v == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, 5, 3);
    let out = center_columns(x.view()).unwrap();
    for j in 0..3 {
        let mean: f64 = out.column(j).iter().sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12);
    }
}

#[test]
fn self_similarity_and_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let x = random(&mut rng, 10, 5);
        assert!((linear_cka_arrays(x.view(), x.view()).unwrap() - 1.0).abs() < 1e-12);
        let q = orthogonal(&mut rng, 5);
        let c = rng.gen_range(0.1..10.0) * if rng.gen() { 1.0 } else { -1.0 };
        let y = x.dot(&q) * c;
        assert!((linear_cka_arrays(x.view(), y.view()).unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn small_integer_matrices_match_hsic_oracle() {
    let x = array![[1.0, 2.0], [3.0, 1.0], [0.0, 4.0], [2.0, 2.0]];
    let y = array![[1.0, 0.0, 2.0], [2.0, 1.0, 0.0], [0.0, 3.0, 1.0], [1.0, 1.0, 1.0]];
    let want = oracle::cka_gram(&rows(&x), &rows(&y));
    assert!((linear_cka_arrays(x.view(), y.view()).unwrap() - want).abs() < 1e-10);
}

#[test]
fn feature_and_gram_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = random(&mut rng, 10, 5);
        let y = random(&mut rng, 10, 5);
        let f = linear_cka_features(x.view(), y.view()).unwrap();
        let g = linear_cka_gram(x.view(), y.view()).unwrap();
        assert!((f - g).abs() < 1e-10);
        assert!((f - oracle::cka_gram(&rows(&x), &rows(&y))).abs() < 1e-10);
    }
}

fn state(name: &str, layers: &[Array2<f64>]) -> ModelState {
    let ids: Vec<String> = (0..layers[0].nrows()).map(|i| format!("ex{i}")).collect();
    let h = probe_hash(&ids);
    ModelState {
        name: name.into(),
        layers: layers
            .iter()
            .enumerate()
            .map(|(k, m)| ActivationMatrix::new(name, k, "probe", h, m.clone()).unwrap())
            .collect(),
    }
}

#[test]
fn state_against_itself_has_unit_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layers: Vec<Array2<f64>> = (0..3).map(|_| random(&mut rng, 12, 6)).collect();
    let s = state("a", &layers);
    let cmp = cka_state_matrix(&[s], "probe").unwrap();
    assert_eq!(cmp.len(), 1);
    assert!(cmp[0].diagonal.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn permuted_layers_move_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layers: Vec<Array2<f64>> = (0..4).map(|_| random(&mut rng, 20, 8)).collect();
    let perm = [2, 0, 3, 1];
    let permuted: Vec<Array2<f64>> = perm.iter().map(|&i| layers[i].clone()).collect();
    let cmp = cka_state_matrix(&[state("a", &layers), state("b", &permuted)], "probe").unwrap();
    let ab = cmp.iter().find(|c| c.state_a == "a" && c.state_b == "b").unwrap();
    for (j, &i) in perm.iter().enumerate() {
        assert_eq!(ab.layers.argmax_in_row(i), j);
        assert!((ab.layers.values[(i, j)] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn midtrained_final_layer_drifts_less() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let layers: Vec<Array2<f64>> = (0..3).map(|_| random(&mut rng, 30, 10)).collect();
    let nudge = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<Array2<f64>> {
        layers.iter().map(|m| m + &(random(rng, 30, 10) * scale)).collect()
    };
    let base_after = nudge(&mut rng, 1.0);
    let mid_after = nudge(&mut rng, 0.2);
    let before = state("before", &layers);
    let base = final_layer_drift(&before, &state("base_ft", &base_after)).unwrap();
    let mid = final_layer_drift(&before, &state("mid_ft", &mid_after)).unwrap();
    assert!(mid < base, "{mid} vs {base}");
}

#[test]
fn dumps_round_trip_through_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Values exactly representable in f32 survive the dump unchanged.
    let layers: Vec<Array2<f64>> = (0..2)
        .map(|_| random(&mut rng, 6, 3).mapv(|v| f64::from(v as f32)))
        .collect();
    let s = state("m", &layers);
    for l in &s.layers {
        let path = dir.path().join(dump_file_name("m", l.layer, "probe"));
        let mut bytes = Vec::new();
        l.write_dump(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"ACTV");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes.len(), 21 + 6 * 3 * 4);
        std::fs::write(path, bytes).unwrap();
    }
    let loaded = ModelState::load_dir(dir.path(), "m", "probe").unwrap();
    assert_eq!(loaded, s);
}
