//! Evaluation metrics: heavy-entry coverage of a key selection, clustering
//! recovery (adjusted Rand index), and attention approximation error.

use std::collections::HashMap;

use crate::attention::{attention_matrix, AttentionOutput};
use crate::error::{CoreError, Result};
use crate::hyper::AttentionResult;
use crate::matrix::Matrix;
use crate::prescore::ScoredKeySet;

/// How much of the heavy attention mass a key selection captures.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Heaviness threshold on the row-normalized attention matrix.
    pub epsilon: f64,
    /// Number of selected keys.
    pub keys_sampled: usize,
    /// Entries of the normalized attention matrix above `epsilon`.
    pub heavy_total: usize,
    /// Heavy entries whose column index is in the selection.
    pub heavy_captured: usize,
    /// `100 * heavy_captured / heavy_total`; 100 when there are no heavy
    /// entries.
    pub percentage: f64,
    /// Of the `keys_sampled` columns holding the most heavy entries, how many
    /// are in the selection.
    pub topk_columns_captured: usize,
    /// `100 * topk_columns_captured / keys_sampled`; 100 when there are no
    /// heavy entries.
    pub topk_percentage: f64,
}

impl CoverageReport {
    /// One CSV row: epsilon, keys_sampled, method, heavy_total,
    /// heavy_captured, percentage, topk_percentage, seed.
    pub fn csv_row(&self, method: &str, seed: u64) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epsilon,
            self.keys_sampled,
            method,
            self.heavy_total,
            self.heavy_captured,
            self.percentage,
            self.topk_percentage,
            seed
        )
    }

    /// Header matching [`CoverageReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "epsilon,keys_sampled,method,heavy_total,heavy_captured,percentage,topk_percentage,seed"
    }
}

/// Coverage of the `epsilon`-heavy entries of the normalized attention matrix
/// by the selected key columns, plus top-k heavy-column coverage.
pub fn heavy_coverage(
    q: &Matrix,
    k: &Matrix,
    selected: &ScoredKeySet,
    epsilon: f64,
) -> Result<CoverageReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        // epsilon >= 1 cannot be exceeded by a normalized entry; treat it as
        // a vacuous threshold rather than an error.
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(CoreError::invalid("epsilon", "must be a positive real"));
        }
    }
    for &i in &selected.indices {
        if i >= k.rows() {
            return Err(CoreError::invalid(
                "selected",
                format!("key index {i} out of range for {} keys", k.rows()),
            ));
        }
    }
    coverage_of_indices(q, k, &selected.indices, epsilon)
}

/// Same as [`heavy_coverage`] but over a bare index set; used for random
/// selection baselines.
pub fn coverage_of_indices(
    q: &Matrix,
    k: &Matrix,
    indices: &[usize],
    epsilon: f64,
) -> Result<CoverageReport> {
    let attn = attention_matrix(q, k, true)?;
    let n_k = k.rows();
    let mut in_selection = vec![false; n_k];
    for &i in indices {
        in_selection[i] = true;
    }

    let mut heavy_total = 0usize;
    let mut heavy_captured = 0usize;
    let mut column_counts = vec![0usize; n_k];
    for i in 0..attn.rows() {
        for (j, &v) in attn.row(i).iter().enumerate() {
            if v > epsilon {
                heavy_total += 1;
                column_counts[j] += 1;
                if in_selection[j] {
                    heavy_captured += 1;
                }
            }
        }
    }

    let keys_sampled = indices.len();
    let (percentage, topk_columns_captured, topk_percentage) = if heavy_total == 0 {
        (100.0, 0, 100.0)
    } else {
        let pct = 100.0 * heavy_captured as f64 / heavy_total as f64;
        // Top keys_sampled columns by heavy-entry count, ties toward the
        // lower column index.
        let mut order: Vec<usize> = (0..n_k).collect();
        order.sort_by(|&a, &b| column_counts[b].cmp(&column_counts[a]).then(a.cmp(&b)));
        let captured = order
            .iter()
            .take(keys_sampled)
            .filter(|&&c| in_selection[c])
            .count();
        (pct, captured, 100.0 * captured as f64 / keys_sampled as f64)
    };

    Ok(CoverageReport {
        epsilon,
        keys_sampled,
        heavy_total,
        heavy_captured,
        percentage,
        topk_columns_captured,
        topk_percentage,
    })
}

/// Adjusted Rand index between two partitions, in [-1, 1]; exactly 1 iff the
/// partitions are identical up to relabeling.
pub fn recovery_score(labels: &[usize], assignment: &[usize]) -> Result<f64> {
    if labels.len() != assignment.len() {
        return Err(CoreError::LengthMismatch {
            op: "recovery_score",
            left: labels.len(),
            right: assignment.len(),
        });
    }
    if labels.is_empty() {
        return Err(CoreError::invalid("labels", "partitions must be non-empty"));
    }

    let mut contingency: HashMap<(usize, usize), usize> = HashMap::new();
    let mut a_counts: HashMap<usize, usize> = HashMap::new();
    let mut b_counts: HashMap<usize, usize> = HashMap::new();
    for (&a, &b) in labels.iter().zip(assignment) {
        *contingency.entry((a, b)).or_insert(0) += 1;
        *a_counts.entry(a).or_insert(0) += 1;
        *b_counts.entry(b).or_insert(0) += 1;
    }

    let comb2 = |x: usize| -> f64 {
        if x < 2 {
            0.0
        } else {
            (x as f64) * (x as f64 - 1.0) / 2.0
        }
    };

    let sum_ab: f64 = contingency.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = a_counts.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = b_counts.values().map(|&c| comb2(c)).sum();
    let total = comb2(labels.len());

    let expected = sum_a * sum_b / total.max(1.0);
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() == 0.0 {
        // Both partitions trivial (all singletons or one block): identical.
        return Ok(1.0);
    }
    Ok((sum_ab - expected) / (max_index - expected))
}

/// Relative Frobenius error of an approximate attention output against the
/// exact oracle.
pub fn attention_error(approx: &AttentionResult, exact: &AttentionOutput) -> Result<f64> {
    matrix_relative_error(&approx.out, &exact.out)
}

/// `||a - b||_F / ||b||_F`.
pub fn matrix_relative_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    let denom = b.frobenius_norm();
    if denom == 0.0 {
        return Err(CoreError::invalid(
            "exact",
            "reference output has zero Frobenius norm",
        ));
    }
    Ok(a.frobenius_distance(b)? / denom)
}
