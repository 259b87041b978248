//! Runtime scaling: wall time of exact, block, and pre-scored attention over
//! a geometric grid of sequence lengths, with fitted log-log slopes.
//!
//! Timing runs strictly on the current thread (the `--threads` flag does not
//! apply) with one warm-up followed by `timing_reps` timed repetitions per
//! point; the median is reported. Timing columns are physical measurements
//! and vary between runs; everything else in the report is deterministic.

use std::time::Instant;

use anyhow::{bail, Result};
use serde_json::json;

use prescore_core::hyper::{
    hyper_attention, prescored_hyper_attention, HyperConfig, PreScoredConfig,
};
use prescore_core::prescore::{PreScoreConfig, ScoreMethod};
use prescore_core::{exact_attention, gaussian_matrix, Matrix, Rng};

use crate::config::{axis_or, ExperimentConfig};
use crate::report::{fmt_f64, RunOutput};

/// Fitted log-log slope cap for the pre-scored pipeline.
pub const PRESCORED_SLOPE_MAX: f64 = 1.5;
/// Fitted log-log slope floor for the exact oracle.
pub const EXACT_SLOPE_MIN: f64 = 1.8;
/// Required exact/pre-scored speedup at the reference length.
pub const MIN_SPEEDUP: f64 = 2.0;
/// Reference length for the speedup check.
pub const SPEEDUP_AT_N: usize = 8192;

const METHODS: [&str; 4] = ["exact", "hyper", "prescored_kmeans", "prescored_leverage"];

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n_axis = axis_or(&cfg.grid.n, &[1024, 2048, 4096, 8192, 16384]);
    let d = axis_or(&cfg.grid.d, &[16])[0];
    let s = axis_or(&cfg.grid.s, &[256])[0];
    let block_size = axis_or(&cfg.grid.block_size, &[64])[0];
    let lsh_bits = axis_or(&cfg.grid.lsh_bits, &[8])[0];
    let reps = cfg.grid.timing_reps;
    let seed = cfg.seeds[0];
    if n_axis.len() < 2 {
        bail!("field `grid.n`: the speed experiment needs at least two lengths to fit a slope");
    }

    let mut rows = Vec::new();
    let mut medians: Vec<(String, usize, f64)> = Vec::new();

    for &n in &n_axis {
        if s > n || block_size > n {
            bail!("field `grid.s`/`grid.block_size`: must not exceed n = {n}");
        }
        let mut rng = Rng::new(seed).split(n as u64);
        let q = gaussian_matrix(&mut rng, n, d, 0.0, 1.0)?;
        let k = gaussian_matrix(&mut rng, n, d, 0.0, 1.0)?;
        let v = gaussian_matrix(&mut rng, n, d, 0.0, 1.0)?;

        for method in METHODS {
            let median = time_method(method, &q, &k, &v, cfg, block_size, lsh_bits, s, reps)?;
            rows.push(format!(
                "{n},{d},{s},{block_size},{lsh_bits},{method},{reps},{}",
                fmt_f64(median)
            ));
            medians.push((method.to_string(), n, median));
        }
    }

    let mut checks = serde_json::Map::new();
    let mut slopes = serde_json::Map::new();
    let mut pass = true;
    let slope_of = |name: &str| -> f64 {
        let pts: Vec<(f64, f64)> = medians
            .iter()
            .filter(|(m, _, _)| m == name)
            .map(|&(_, n, t)| ((n as f64).ln(), t.max(1e-12).ln()))
            .collect();
        fit_slope(&pts)
    };
    for method in METHODS {
        slopes.insert(method.to_string(), json!(slope_of(method)));
    }

    let exact_slope = slopes["exact"].as_f64().unwrap();
    let prescored_slope = slopes["prescored_kmeans"].as_f64().unwrap();
    let exact_ok = exact_slope > EXACT_SLOPE_MIN;
    let prescored_ok = prescored_slope < PRESCORED_SLOPE_MAX;
    pass &= exact_ok && prescored_ok;
    checks.insert(
        "exact_slope".into(),
        json!({"value": exact_slope, "threshold_min": EXACT_SLOPE_MIN, "pass": exact_ok}),
    );
    checks.insert(
        "prescored_slope".into(),
        json!({"value": prescored_slope, "threshold_max": PRESCORED_SLOPE_MAX, "pass": prescored_ok}),
    );

    let ref_n = if n_axis.contains(&SPEEDUP_AT_N) {
        SPEEDUP_AT_N
    } else {
        *n_axis.iter().max().unwrap()
    };
    let time_at = |name: &str| {
        medians
            .iter()
            .find(|(m, n, _)| m == name && *n == ref_n)
            .map(|&(_, _, t)| t)
            .unwrap_or(f64::NAN)
    };
    let speedup = time_at("exact") / time_at("prescored_kmeans");
    let speedup_ok = speedup >= MIN_SPEEDUP;
    pass &= speedup_ok;
    checks.insert(
        "speedup_at_reference".into(),
        json!({"value": speedup, "n": ref_n, "threshold_min": MIN_SPEEDUP, "pass": speedup_ok}),
    );

    let summary = json!({
        "experiment": "speed",
        "rows": rows.len(),
        "slopes": slopes,
        "checks": checks,
        "pass": pass,
    });

    Ok(RunOutput {
        experiment: "speed",
        csv_header: "n,d,s,block_size,lsh_bits,method,reps,median_seconds".into(),
        csv_rows: rows,
        summary,
        pass,
    })
}

#[allow(clippy::too_many_arguments)]
fn time_method(
    method: &str,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cfg: &ExperimentConfig,
    block_size: usize,
    lsh_bits: usize,
    s: usize,
    reps: usize,
) -> Result<f64> {
    let d = k.cols();
    let hyper = HyperConfig {
        lsh_bits,
        block_size,
        residual_samples: 0,
        min_seq_len: 0,
        seed: cfg.seeds[0],
    };
    let score_method = |m: ScoreMethod| {
        let mut p = PreScoreConfig::new(m, cfg.grid.k.first().copied().unwrap_or(d + 1), s);
        p.restarts = cfg.grid.restarts;
        p.max_iters = cfg.grid.max_iters;
        p.seed = cfg.seeds[0];
        PreScoredConfig::new(p, hyper.clone())
    };

    let run_once = || -> Result<()> {
        let mut rng = Rng::new(cfg.seeds[0]);
        match method {
            "exact" => {
                exact_attention(q, k, v)?;
            }
            "hyper" => {
                hyper_attention(q, k, v, &hyper, &mut rng)?;
            }
            "prescored_kmeans" => {
                prescored_hyper_attention(q, k, v, &score_method(ScoreMethod::Kmeans), &mut rng)?;
            }
            "prescored_leverage" => {
                prescored_hyper_attention(q, k, v, &score_method(ScoreMethod::Leverage), &mut rng)?;
            }
            other => bail!("unknown speed method {other}"),
        }
        Ok(())
    };

    run_once()?; // warm-up
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        run_once()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}
