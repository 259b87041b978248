//! Pre-scored approximate attention.
//!
//! The crate implements key pre-scoring (k-means, k-median, Minkowski and
//! Gaussian-kernel clustering, plus exact and sketched leverage scores)
//! composed with LSH-sorted block attention, together with synthetic
//! planted-subspace generators and the metrics used to evaluate how much of
//! the heavy attention mass a key selection captures.

pub mod attention;
pub mod error;
pub mod hyper;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod planted;
pub mod prescore;
pub mod rng;

pub use attention::{attention_matrix, exact_attention, exact_leverage_scores, AttentionOutput};
pub use error::{CoreError, Result};
pub use hyper::{
    angular_lsh_codes, hyper_attention, prescored_hyper_attention, AttentionResult, HyperConfig,
    PreScoredConfig,
};
pub use matrix::{gaussian_matrix, normalize_rows, pairwise_sq_dist, Matrix};
pub use metrics::{attention_error, heavy_coverage, recovery_score, CoverageReport};
pub use planted::{
    generate_counterexample, generate_planted, planted_cost_gap, PlantedConfig, PlantedInstance,
};
pub use prescore::{
    approx_leverage_scores, kernel_kmeans_cluster, lloyd_cluster, prescore, Clustering,
    PreScoreConfig, ScoreMethod, ScoredKeySet,
};
pub use rng::Rng;
