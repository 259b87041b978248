//! Ground-truth recovery on planted instances: clustering finds the planted
//! partition, clustering-based selection agrees with leverage selection, and
//! the sketched leverage scores track the exact ones.

use prescore_core::matrix::normalize_rows;
use prescore_core::metrics::recovery_score;
use prescore_core::planted::{generate_counterexample, generate_planted, PlantedConfig};
use prescore_core::prescore::{
    approx_leverage_scores, lloyd_cluster, prescore, PreScoreConfig, ScoreMethod,
};
use prescore_core::{exact_leverage_scores, gaussian_matrix, Matrix, Rng};

fn reference_instance(seed: u64) -> prescore_core::planted::PlantedInstance {
    let cfg = PlantedConfig::new(1000, 8, 0.1, 0.1, 0.1, seed);
    generate_planted(&cfg, &mut Rng::new(seed)).unwrap()
}

#[test]
fn kmeans_recovers_planted_partition() {
    let inst = reference_instance(11);
    let mut cfg = PreScoreConfig::new(ScoreMethod::Kmeans, 9, 80);
    cfg.seed = 11;
    let clustering = lloyd_cluster(&inst.matrix, &cfg).unwrap();
    let ari = recovery_score(&inst.labels, &clustering.assignment).unwrap();
    assert_eq!(ari, 1.0, "assignment must match the planted partition");
}

#[test]
fn leverage_selection_returns_exactly_the_signal_rows() {
    let inst = reference_instance(11);
    let s = 8 * 10; // d * m
    let cfg = PreScoreConfig::new(ScoreMethod::LeverageExact, 9, s);
    let set = prescore(&inst.matrix, &cfg, &mut Rng::new(0)).unwrap();
    let mut got = set.indices.clone();
    got.sort_unstable();
    assert_eq!(got, inst.signal_rows());
}

#[test]
fn kmeans_selection_matches_leverage_selection() {
    let inst = reference_instance(11);
    let s = 8 * 10;
    let mut km = PreScoreConfig::new(ScoreMethod::Kmeans, 9, s);
    km.seed = 11;
    let lev = PreScoreConfig::new(ScoreMethod::LeverageExact, 9, s);
    let km_set = prescore(&inst.matrix, &km, &mut Rng::new(0)).unwrap();
    let lev_set = prescore(&inst.matrix, &lev, &mut Rng::new(0)).unwrap();
    let mut a = km_set.indices.clone();
    let mut b = lev_set.indices.clone();
    a.sort_unstable();
    b.sort_unstable();
    assert_eq!(a, b, "clustering and leverage retain the same keys");
}

#[test]
fn singleton_regime_isolates_each_signal_row() {
    // epsilon = 1 means one row per signal direction.
    let cfg = PlantedConfig::new(400, 8, 1.0, 0.1, 0.1, 21);
    let inst = generate_planted(&cfg, &mut Rng::new(cfg.seed)).unwrap();
    let mut pcfg = PreScoreConfig::new(ScoreMethod::Kmeans, 9, 8);
    pcfg.seed = 21;
    let clustering = lloyd_cluster(&inst.matrix, &pcfg).unwrap();

    let mut noise_cluster = None;
    for (i, &label) in inst.labels.iter().enumerate() {
        let c = clustering.assignment[i];
        if label == 0 {
            match noise_cluster {
                None => noise_cluster = Some(c),
                Some(nc) => assert_eq!(nc, c, "all noise rows share one cluster"),
            }
        } else {
            let members = clustering
                .assignment
                .iter()
                .filter(|&&a| a == c)
                .count();
            assert_eq!(members, 1, "signal row {i} should be a singleton");
        }
    }
}

#[test]
fn lp_clustering_recovers_partition_for_each_exponent() {
    for &p in &[1.0, 1.5, 3.0] {
        let inst = reference_instance(31);
        let mut cfg = PreScoreConfig::new(ScoreMethod::LpKmeans, 9, 80);
        cfg.p = p;
        cfg.seed = 31;
        cfg.restarts = 16;
        let clustering = lloyd_cluster(&inst.matrix, &cfg).unwrap();
        let ari = recovery_score(&inst.labels, &clustering.assignment).unwrap();
        assert_eq!(ari, 1.0, "p = {p}");
    }
}

#[test]
fn norm_sensitivity_regression() {
    // Unnormalized: with k = d/2 the optimal clustering pairs two S points
    // instead of isolating them.
    let d = 8;
    let inst = generate_counterexample(1000, d, 100.0, &Rng::new(1)).unwrap();
    let mut cfg = PreScoreConfig::new(ScoreMethod::Kmeans, d / 2, 4);
    cfg.seed = 1;
    let clustering = lloyd_cluster(&inst.matrix, &cfg).unwrap();
    let signal = inst.signal_rows();
    let mut shared = false;
    for (ai, &a) in signal.iter().enumerate() {
        for &b in signal.iter().skip(ai + 1) {
            if clustering.assignment[a] == clustering.assignment[b] {
                shared = true;
            }
        }
    }
    assert!(shared, "at least two relevant keys end up in one cluster");

    // Normalized, with k = d + 1: every S row becomes a singleton and the
    // bulk collapses into one cluster.
    let normalized = normalize_rows(&inst.matrix).unwrap();
    let mut cfg = PreScoreConfig::new(ScoreMethod::Kmeans, d + 1, 4);
    cfg.seed = 1;
    let clustering = lloyd_cluster(&normalized, &cfg).unwrap();
    for &i in &signal {
        let members = clustering
            .assignment
            .iter()
            .filter(|&&a| a == clustering.assignment[i])
            .count();
        assert_eq!(members, 1, "S row {i} isolated after normalization");
    }
    let noise = inst.noise_rows();
    let first = clustering.assignment[noise[0]];
    assert!(noise.iter().all(|&i| clustering.assignment[i] == first));
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
        let mut ranks = vec![0.0; v.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let ra = rank(a);
    let rb = rank(b);
    let n = ra.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        var_a += (x - mean) * (x - mean);
        var_b += (y - mean) * (y - mean);
    }
    cov / (var_a.sqrt() * var_b.sqrt())
}

#[test]
fn sketched_leverage_tracks_exact_ranking() {
    let mut rng = Rng::new(2);
    let m = gaussian_matrix(&mut rng, 512, 16, 0.0, 1.0).unwrap();
    let exact = exact_leverage_scores(&m).unwrap();
    let approx = approx_leverage_scores(&m, 128, &mut Rng::new(2)).unwrap();
    let rho = spearman(&approx, &exact);
    assert!(rho >= 0.95, "Spearman correlation {rho}");
}

#[test]
fn sketched_leverage_top_set_contains_all_signal_rows() {
    let inst = reference_instance(41);
    let s = 8 * 10;
    let approx = approx_leverage_scores(&inst.matrix, 8 * 8, &mut Rng::new(41)).unwrap();
    let mut order: Vec<usize> = (0..approx.len()).collect();
    order.sort_by(|&a, &b| approx[b].total_cmp(&approx[a]));
    let top: std::collections::HashSet<usize> = order[..s].iter().copied().collect();
    for i in inst.signal_rows() {
        assert!(top.contains(&i), "signal row {i} missing from sketched top set");
    }
}

#[test]
fn selection_scores_prefer_signal_rows() {
    // The norm-relative distance of a signal row to its centroid is far
    // below that of a bulk row, which sits at distance roughly its own norm.
    let inst = reference_instance(51);
    let mut cfg = PreScoreConfig::new(ScoreMethod::Kmeans, 9, 80);
    cfg.seed = 51;
    let set = prescore(&inst.matrix, &cfg, &mut Rng::new(0)).unwrap();
    let signal: std::collections::HashSet<usize> = inst.signal_rows().into_iter().collect();
    assert!(set.indices.iter().all(|i| signal.contains(i)));
}

#[test]
fn matrix_and_labels_roundtrip_through_files() {
    let inst = reference_instance(61);
    let dir = std::env::temp_dir().join(format!("prescore-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mpath = dir.join("keys.pamx");
    let lpath = dir.join("keys.labels");
    prescore_core::planted::save_instance(&inst, &mpath, &lpath).unwrap();
    let (matrix, labels) = prescore_core::planted::load_instance_data(&mpath, &lpath).unwrap();
    assert_eq!(matrix, inst.matrix);
    assert_eq!(labels, inst.labels);
    let loaded = Matrix::load(&mpath).unwrap();
    assert_eq!(loaded, inst.matrix);
    std::fs::remove_dir_all(&dir).unwrap();
}
