//! Experiment implementations: one module per family, a shared grid
//! expansion, and the dispatcher.

mod approx_error;
mod coverage;
mod norm_sensitivity;
mod recovery;
mod separation;
mod speed;

use anyhow::Result;
use rayon::prelude::*;

use crate::config::{axis_or, Experiment, ExperimentConfig};
use crate::report::RunOutput;

/// Run the configured experiment on a worker pool of the given size.
///
/// Speed measurements always run single-threaded regardless of `threads`.
/// Rows are produced through order-preserving parallel maps, so the report
/// bytes never depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let threads = threads.max(1);
    match cfg.experiment {
        Experiment::Speed => speed::run(cfg),
        _ => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| anyhow::anyhow!("worker pool: {e}"))?;
            pool.install(|| match cfg.experiment {
                Experiment::LeverageSeparation => separation::run(cfg),
                Experiment::ClusterRecovery => recovery::run_cluster(cfg),
                Experiment::SingletonRecovery => recovery::run_singleton(cfg),
                Experiment::LpRecovery => recovery::run_lp(cfg),
                Experiment::NormSensitivity => norm_sensitivity::run(cfg),
                Experiment::Coverage => coverage::run(cfg),
                Experiment::ApproxError => approx_error::run(cfg),
                Experiment::Speed => unreachable!(),
            })
        }
    }
}

/// One planted-model grid point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PlantedPoint {
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub c_s: f64,
    pub c_n: f64,
}

/// Cartesian product of the planted axes, with per-experiment defaults for
/// axes the config leaves empty.
pub(crate) fn planted_points(
    cfg: &ExperimentConfig,
    default_n: &[usize],
    default_d: &[usize],
    default_epsilon: &[f64],
) -> Vec<PlantedPoint> {
    let n_axis = axis_or(&cfg.grid.n, default_n);
    let d_axis = axis_or(&cfg.grid.d, default_d);
    let eps_axis = axis_or(&cfg.grid.epsilon, default_epsilon);
    let cs_axis = axis_or(&cfg.grid.c_s, &[0.1]);
    let cn_axis = axis_or(&cfg.grid.c_n, &[0.1]);
    let mut points = Vec::new();
    for &n in &n_axis {
        for &d in &d_axis {
            for &epsilon in &eps_axis {
                for &c_s in &cs_axis {
                    for &c_n in &cn_axis {
                        points.push(PlantedPoint {
                            n,
                            d,
                            epsilon,
                            c_s,
                            c_n,
                        });
                    }
                }
            }
        }
    }
    points
}

/// Map `f` over `(item, seed)` pairs in parallel, preserving order.
pub(crate) fn par_over_seeds<T, R, F>(items: &[T], seeds: &[u64], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T, u64) -> Result<R> + Sync,
{
    let combos: Vec<(usize, u64)> = items
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    combos
        .par_iter()
        .map(|&(i, seed)| f(&items[i], seed))
        .collect()
}

pub(crate) fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
