//! Leverage-score separation: on planted instances the smallest signal-row
//! leverage must exceed ten times the largest noise-row leverage.

use anyhow::Result;
use serde_json::json;

use prescore_core::planted::{generate_planted, PlantedConfig};
use prescore_core::{exact_leverage_scores, Rng};

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, RunOutput};

use super::{par_over_seeds, planted_points, rate};

/// Required min-signal / max-noise leverage ratio.
pub const SEPARATION_RATIO: f64 = 10.0;
/// Required fraction of runs clearing the ratio.
pub const PASS_RATE: f64 = 0.95;

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let points = planted_points(cfg, &[2000], &[16], &[0.1]);

    let rows = par_over_seeds(&points, &cfg.seeds, |pt, seed| {
        let mut pcfg = PlantedConfig::new(pt.n, pt.d, pt.epsilon, pt.c_s, pt.c_n, seed);
        pcfg.normalize = cfg.grid.normalize;
        let inst = generate_planted(&pcfg, &mut Rng::new(seed))?;
        let h = exact_leverage_scores(&inst.matrix)?;
        let min_signal = inst
            .signal_rows()
            .iter()
            .map(|&i| h[i])
            .fold(f64::INFINITY, f64::min);
        let max_noise = inst
            .noise_rows()
            .iter()
            .map(|&i| h[i])
            .fold(0.0f64, f64::max);
        let ratio = min_signal / max_noise;
        let pass = ratio > SEPARATION_RATIO;
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            pt.n,
            pt.d,
            fmt_f64(pt.epsilon),
            fmt_f64(pt.c_s),
            fmt_f64(pt.c_n),
            seed,
            fmt_f64(min_signal),
            fmt_f64(max_noise),
            fmt_f64(ratio),
            pass
        );
        Ok((row, pass))
    })?;

    let passes = rows.iter().filter(|(_, p)| *p).count();
    let pass_rate = rate(passes, rows.len());
    let pass = pass_rate >= PASS_RATE;
    let summary = json!({
        "experiment": "leverage-separation",
        "rows": rows.len(),
        "checks": {
            "separation_pass_rate": {
                "value": pass_rate,
                "threshold": PASS_RATE,
                "ratio_required": SEPARATION_RATIO,
                "pass": pass,
            }
        },
        "pass": pass,
    });

    Ok(RunOutput {
        experiment: "leverage-separation",
        csv_header: "n,d,epsilon,c_s,c_n,seed,min_signal_leverage,max_noise_leverage,ratio,pass"
            .into(),
        csv_rows: rows.into_iter().map(|(r, _)| r).collect(),
        summary,
        pass,
    })
}
