//! Clustering recovery experiments: planted-partition recovery with centroid
//! concentration, the singleton regime, and the Minkowski-exponent family.

use anyhow::Result;
use serde_json::json;

use prescore_core::matrix::{dot, sq_dist};
use prescore_core::metrics::recovery_score;
use prescore_core::planted::{generate_planted, PlantedConfig, PlantedInstance};
use prescore_core::prescore::{lloyd_cluster, Clustering, PreScoreConfig, ScoreMethod};
use prescore_core::Rng;

use crate::config::{axis_or, ExperimentConfig};
use crate::report::{fmt_f64, RunOutput};

use super::{par_over_seeds, planted_points, rate, PlantedPoint};

/// Required fraction of runs with ARI exactly 1.
pub const RECOVERY_RATE: f64 = 0.95;
/// Required fraction of runs with ARI 1 per Minkowski exponent.
pub const LP_RECOVERY_RATE: f64 = 0.90;
/// Centroid error allowance: five times the per-group noise scale.
pub const CONCENTRATION_FACTOR: f64 = 5.0;

fn planted_instance(pt: &PlantedPoint, normalize: bool, seed: u64) -> Result<PlantedInstance> {
    let mut pcfg = PlantedConfig::new(pt.n, pt.d, pt.epsilon, pt.c_s, pt.c_n, seed);
    pcfg.normalize = normalize;
    Ok(generate_planted(&pcfg, &mut Rng::new(seed))?)
}

fn cluster_config(
    cfg: &ExperimentConfig,
    method: ScoreMethod,
    k: usize,
    n: usize,
    seed: u64,
) -> PreScoreConfig {
    let mut pcfg = PreScoreConfig::new(method, k, n);
    pcfg.restarts = cfg.grid.restarts;
    pcfg.max_iters = cfg.grid.max_iters;
    pcfg.seed = seed;
    pcfg
}

/// Centroid concentration against the planted directions, assuming the
/// assignment equals the ground truth up to labels.
fn concentration(inst: &PlantedInstance, clustering: &Clustering) -> (f64, f64, f64, f64, bool) {
    let cfg = &inst.config;
    let m = cfg.m();
    let d = cfg.d as f64;
    let noise_count = (cfg.n - cfg.d * m) as f64;
    let signal_bound = CONCENTRATION_FACTOR * cfg.sigma_signal() * (d / m as f64).sqrt();
    let noise_bound = CONCENTRATION_FACTOR * cfg.sigma_noise() * (d / noise_count).sqrt();

    let mut max_signal_err = 0.0f64;
    for j in 1..=cfg.d {
        let row = inst
            .labels
            .iter()
            .position(|&l| l == j)
            .expect("every group is populated");
        let cluster = clustering.assignment[row];
        let err = sq_dist(clustering.centroids.row(cluster), inst.basis.row(j - 1)).sqrt();
        max_signal_err = max_signal_err.max(err);
    }
    let noise_row = inst
        .labels
        .iter()
        .position(|&l| l == 0)
        .expect("noise bulk is populated");
    let noise_cluster = clustering.assignment[noise_row];
    let centroid = clustering.centroids.row(noise_cluster);
    let noise_err = dot(centroid, centroid).sqrt();

    let ok = max_signal_err <= signal_bound && noise_err <= noise_bound;
    (max_signal_err, signal_bound, noise_err, noise_bound, ok)
}

pub fn run_cluster(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let points = planted_points(cfg, &[2000], &[16], &[0.1]);

    struct Record {
        row: String,
        recovered: bool,
        concentrated: bool,
    }

    let records = par_over_seeds(&points, &cfg.seeds, |pt, seed| {
        let inst = planted_instance(pt, cfg.grid.normalize, seed)?;
        let k = cfg.grid.k.first().copied().unwrap_or(pt.d + 1);
        let pcfg = cluster_config(cfg, ScoreMethod::Kmeans, k, pt.n, seed);
        let clustering = lloyd_cluster(&inst.matrix, &pcfg)?;
        let ari = recovery_score(&inst.labels, &clustering.assignment)?;
        let recovered = ari == 1.0;
        let (sig_err, sig_bound, noise_err, noise_bound, concentrated) = if recovered {
            concentration(&inst, &clustering)
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN, false)
        };
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            pt.n,
            pt.d,
            fmt_f64(pt.epsilon),
            fmt_f64(pt.c_s),
            fmt_f64(pt.c_n),
            k,
            pcfg.restarts,
            seed,
            fmt_f64(ari),
            recovered,
            fmt_f64(sig_err),
            fmt_f64(sig_bound),
            fmt_f64(noise_err),
            fmt_f64(noise_bound),
            concentrated
        );
        Ok(Record {
            row,
            recovered,
            concentrated,
        })
    })?;

    let total = records.len();
    let recovery_rate = rate(records.iter().filter(|r| r.recovered).count(), total);
    let concentration_rate = rate(records.iter().filter(|r| r.concentrated).count(), total);
    let pass = recovery_rate >= RECOVERY_RATE && concentration_rate >= RECOVERY_RATE;
    let summary = json!({
        "experiment": "cluster-recovery",
        "rows": total,
        "checks": {
            "recovery_rate": {"value": recovery_rate, "threshold": RECOVERY_RATE, "pass": recovery_rate >= RECOVERY_RATE},
            "concentration_rate": {"value": concentration_rate, "threshold": RECOVERY_RATE, "pass": concentration_rate >= RECOVERY_RATE},
        },
        "pass": pass,
    });

    Ok(RunOutput {
        experiment: "cluster-recovery",
        csv_header: "n,d,epsilon,c_s,c_n,k,restarts,seed,ari,recovered,max_signal_centroid_err,signal_bound,noise_centroid_err,noise_bound,concentrated".into(),
        csv_rows: records.into_iter().map(|r| r.row).collect(),
        summary,
        pass,
    })
}

pub fn run_singleton(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let points = planted_points(cfg, &[2000], &[16], &[1.0]);

    let rows = par_over_seeds(&points, &cfg.seeds, |pt, seed| {
        let inst = planted_instance(pt, cfg.grid.normalize, seed)?;
        let k = cfg.grid.k.first().copied().unwrap_or(pt.d + 1);
        let pcfg = cluster_config(cfg, ScoreMethod::Kmeans, k, pt.n, seed);
        let clustering = lloyd_cluster(&inst.matrix, &pcfg)?;

        let mut singletons = true;
        let mut pooled = true;
        let mut noise_cluster = None;
        for (i, &label) in inst.labels.iter().enumerate() {
            let c = clustering.assignment[i];
            if label == 0 {
                match noise_cluster {
                    None => noise_cluster = Some(c),
                    Some(nc) if nc != c => pooled = false,
                    _ => {}
                }
            } else if clustering.assignment.iter().filter(|&&a| a == c).count() != 1 {
                singletons = false;
            }
        }
        let pass = singletons && pooled;
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            pt.n,
            pt.d,
            fmt_f64(pt.epsilon),
            fmt_f64(pt.c_s),
            fmt_f64(pt.c_n),
            k,
            pcfg.restarts,
            seed,
            singletons,
            pooled,
            pass
        );
        Ok((row, pass))
    })?;

    let passes = rows.iter().filter(|(_, p)| *p).count();
    let singleton_rate = rate(passes, rows.len());
    let pass = singleton_rate >= RECOVERY_RATE;
    let summary = json!({
        "experiment": "singleton-recovery",
        "rows": rows.len(),
        "checks": {
            "singleton_rate": {"value": singleton_rate, "threshold": RECOVERY_RATE, "pass": pass},
        },
        "pass": pass,
    });

    Ok(RunOutput {
        experiment: "singleton-recovery",
        csv_header: "n,d,epsilon,c_s,c_n,k,restarts,seed,signal_singletons,noise_pooled,pass"
            .into(),
        csv_rows: rows.into_iter().map(|(r, _)| r).collect(),
        summary,
        pass,
    })
}

pub fn run_lp(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let points = planted_points(cfg, &[2000], &[16], &[0.1]);
    let exponents = axis_or(&cfg.grid.p, &[1.0, 1.5, 3.0]);

    struct Record {
        rows: Vec<String>,
        per_p: Vec<(f64, bool)>,
        p2_matches_kmeans: bool,
        p1_matches_kmedian: bool,
    }

    let records = par_over_seeds(&points, &cfg.seeds, |pt, seed| {
        let inst = planted_instance(pt, cfg.grid.normalize, seed)?;
        let k = cfg.grid.k.first().copied().unwrap_or(pt.d + 1);
        let mut rows = Vec::new();
        let mut per_p = Vec::new();
        for &p in &exponents {
            let mut pcfg = cluster_config(cfg, ScoreMethod::LpKmeans, k, pt.n, seed);
            pcfg.p = p;
            let clustering = lloyd_cluster(&inst.matrix, &pcfg)?;
            let ari = recovery_score(&inst.labels, &clustering.assignment)?;
            let recovered = ari == 1.0;
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                pt.n,
                pt.d,
                fmt_f64(pt.epsilon),
                fmt_f64(pt.c_s),
                fmt_f64(pt.c_n),
                k,
                pcfg.restarts,
                fmt_f64(p),
                seed,
                fmt_f64(ari),
                recovered
            ));
            per_p.push((p, recovered));
        }

        // Exponent consistency: p = 2 must reproduce the squared-Euclidean
        // assignment and p = 1 the l1 assignment, bit for bit.
        let kmeans = lloyd_cluster(
            &inst.matrix,
            &cluster_config(cfg, ScoreMethod::Kmeans, k, pt.n, seed),
        )?;
        let mut lp2 = cluster_config(cfg, ScoreMethod::LpKmeans, k, pt.n, seed);
        lp2.p = 2.0;
        let lp2 = lloyd_cluster(&inst.matrix, &lp2)?;
        let kmedian = lloyd_cluster(
            &inst.matrix,
            &cluster_config(cfg, ScoreMethod::Kmedian, k, pt.n, seed),
        )?;
        let mut lp1 = cluster_config(cfg, ScoreMethod::LpKmeans, k, pt.n, seed);
        lp1.p = 1.0;
        let lp1 = lloyd_cluster(&inst.matrix, &lp1)?;

        Ok(Record {
            rows,
            per_p,
            p2_matches_kmeans: lp2.assignment == kmeans.assignment,
            p1_matches_kmedian: lp1.assignment == kmedian.assignment,
        })
    })?;

    let total = records.len();
    let mut checks = serde_json::Map::new();
    let mut pass = true;
    for &p in &exponents {
        let hits = records
            .iter()
            .filter(|r| r.per_p.iter().any(|&(rp, ok)| rp == p && ok))
            .count();
        let r = rate(hits, total);
        let ok = r >= LP_RECOVERY_RATE;
        pass &= ok;
        checks.insert(
            format!("recovery_rate_p{p}"),
            json!({"value": r, "threshold": LP_RECOVERY_RATE, "pass": ok}),
        );
    }
    let p2_ok = records.iter().all(|r| r.p2_matches_kmeans);
    let p1_ok = records.iter().all(|r| r.p1_matches_kmedian);
    pass &= p2_ok && p1_ok;
    checks.insert(
        "p2_assignment_equals_kmeans".into(),
        json!({"value": p2_ok, "pass": p2_ok}),
    );
    checks.insert(
        "p1_assignment_equals_kmedian".into(),
        json!({"value": p1_ok, "pass": p1_ok}),
    );

    let summary = json!({
        "experiment": "lp-recovery",
        "rows": records.iter().map(|r| r.rows.len()).sum::<usize>(),
        "checks": checks,
        "pass": pass,
    });

    Ok(RunOutput {
        experiment: "lp-recovery",
        csv_header: "n,d,epsilon,c_s,c_n,k,restarts,p,seed,ari,recovered".into(),
        csv_rows: records.into_iter().flat_map(|r| r.rows).collect(),
        summary,
        pass,
    })
}
