//! Declarative experiment configuration: a versioned TOML file with one
//! experiment selector, a seed list, and per-axis parameter grids.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Supported experiments, one CLI subcommand each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Leverage-score separation between signal and noise rows.
    LeverageSeparation,
    /// k-means recovery of the planted partition plus centroid concentration.
    ClusterRecovery,
    /// Singleton regime: every signal row its own cluster.
    SingletonRecovery,
    /// Minkowski k-means recovery for a grid of exponents.
    LpRecovery,
    /// High-norm construction: clustering fails unnormalized, recovers after
    /// row normalization.
    NormSensitivity,
    /// Heavy-entry coverage of clustering selections vs uniform baselines.
    Coverage,
    /// Runtime scaling of exact vs block vs pre-scored attention.
    Speed,
    /// Approximation error against the exact oracle and a uniform baseline.
    ApproxError,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::LeverageSeparation => "leverage-separation",
            Experiment::ClusterRecovery => "cluster-recovery",
            Experiment::SingletonRecovery => "singleton-recovery",
            Experiment::LpRecovery => "lp-recovery",
            Experiment::NormSensitivity => "norm-sensitivity",
            Experiment::Coverage => "coverage",
            Experiment::Speed => "speed",
            Experiment::ApproxError => "approx-error",
        }
    }
}

/// Parameter grids. Every list axis left empty falls back to the
/// experiment's documented default; scalar knobs have their defaults here.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    /// Row counts.
    pub n: Vec<usize>,
    /// Dimensions.
    pub d: Vec<usize>,
    /// Planted heaviness parameter (group size is ceil(1/epsilon)).
    pub epsilon: Vec<f64>,
    /// Signal noise constants.
    pub c_s: Vec<f64>,
    /// Bulk noise constants.
    pub c_n: Vec<f64>,
    /// Minkowski exponents.
    pub p: Vec<f64>,
    /// Retained key counts.
    pub s: Vec<usize>,
    /// Cluster counts; empty means d + 1.
    pub k: Vec<usize>,
    /// Hash bits.
    pub lsh_bits: Vec<usize>,
    /// Diagonal block sizes.
    pub block_size: Vec<usize>,
    /// Residual sample counts.
    pub residual_samples: Vec<usize>,
    /// Heavy-entry thresholds.
    pub eps_heavy: Vec<f64>,
    /// Scoring methods by name.
    pub method: Vec<String>,
    /// Query temperature: queries are the key matrix scaled by this factor.
    pub attention_scale: Vec<f64>,
    /// Norm of the bulk rows in the norm-sensitivity construction.
    pub big_norm: Vec<f64>,
    /// Normalize planted rows after noise.
    pub normalize: bool,
    /// Lloyd restarts.
    pub restarts: usize,
    /// Lloyd iteration cap.
    pub max_iters: usize,
    /// Uniform random subsets behind the coverage baseline median.
    pub random_subsets: usize,
    /// Timed repetitions per point (after one warm-up).
    pub timing_reps: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n: Vec::new(),
            d: Vec::new(),
            epsilon: Vec::new(),
            c_s: Vec::new(),
            c_n: Vec::new(),
            p: Vec::new(),
            s: Vec::new(),
            k: Vec::new(),
            lsh_bits: Vec::new(),
            block_size: Vec::new(),
            residual_samples: Vec::new(),
            eps_heavy: Vec::new(),
            method: Vec::new(),
            attention_scale: Vec::new(),
            big_norm: Vec::new(),
            normalize: false,
            restarts: 10,
            max_iters: 100,
            random_subsets: 100,
            timing_reps: 5,
        }
    }
}

/// Optional matrix ingestion for the approx-error experiment: binary matrix
/// files produced by the library's dump format.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixInputs {
    pub q_path: PathBuf,
    pub k_path: PathBuf,
    pub v_path: PathBuf,
}

/// A parsed experiment configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Config format version; must be 1.
    pub schema: u32,
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    /// Default output directory; overridden by `--out`.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub inputs: Option<MatrixInputs>,
}

impl ExperimentConfig {
    /// Parse and validate a TOML config string.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).context("config parse error (line/column above)")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != 1 {
            bail!("field `schema`: unsupported version {}, expected 1", self.schema);
        }
        if self.seeds.is_empty() {
            bail!("field `seeds`: must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("field `seeds`: seeds must be distinct");
        }
        if self.grid.restarts == 0 || self.grid.max_iters == 0 {
            bail!("field `grid.restarts`/`grid.max_iters`: must be >= 1");
        }
        if self.grid.timing_reps == 0 {
            bail!("field `grid.timing_reps`: must be >= 1");
        }
        if self.grid.random_subsets == 0 {
            bail!("field `grid.random_subsets`: must be >= 1");
        }
        for m in &self.grid.method {
            prescore_core::ScoreMethod::parse(m)
                .map_err(|e| anyhow::anyhow!("field `grid.method`: {e}"))?;
        }
        if self.inputs.is_some() && self.experiment != Experiment::ApproxError {
            bail!("field `inputs`: matrix ingestion is only supported by approx-error");
        }
        Ok(())
    }

    /// Replace the seed list (the `--seed-override` flag).
    pub fn override_seeds(&mut self, seeds: Vec<u64>) -> Result<()> {
        self.seeds = seeds;
        self.validate()
    }
}

pub(crate) fn axis_or<T: Clone>(axis: &[T], default: &[T]) -> Vec<T> {
    if axis.is_empty() {
        default.to_vec()
    } else {
        axis.to_vec()
    }
}
