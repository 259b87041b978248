//! Brute-force softmax attention and exact statistical leverage scores.
//!
//! These are the ground-truth references every approximation in the crate is
//! measured against. `exact_attention` streams one query row at a time, so the
//! full score matrix is never materialized; `attention_matrix` does
//! materialize it for the diagnostics that need entries.

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::matrix::{dot, Matrix};

/// Output of the exact softmax attention oracle.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// n x d_v output, one convex combination of value rows per query.
    pub out: Matrix,
    /// Row sums of the unnormalized score matrix (the diagonal of D).
    pub row_sums: Vec<f64>,
}

fn check_attention_shapes(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<()> {
    if q.cols() != k.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "attention q/k",
            left: (q.rows(), q.cols()),
            right: (k.rows(), k.cols()),
        });
    }
    if k.rows() != v.rows() {
        return Err(CoreError::ShapeMismatch {
            op: "attention k/v",
            left: (k.rows(), k.cols()),
            right: (v.rows(), v.cols()),
        });
    }
    Ok(())
}

/// Exact attention `D^-1 exp(Q K^T) V`.
///
/// Each row is evaluated with the per-row maximum subtracted before
/// exponentiation; the normalization by D makes this identical to the
/// unstabilized formula while keeping the arithmetic finite.
pub fn exact_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<AttentionOutput> {
    check_attention_shapes(q, k, v)?;
    let n_q = q.rows();
    let n_k = k.rows();
    let d_v = v.cols();

    let mut out = Matrix::zeros(n_q, d_v)?;
    let mut row_sums = Vec::with_capacity(n_q);
    let mut logits = vec![0.0; n_k];

    for i in 0..n_q {
        let qi = q.row(i);
        let mut max_logit = f64::NEG_INFINITY;
        for (j, l) in logits.iter_mut().enumerate() {
            *l = dot(qi, k.row(j));
            if *l > max_logit {
                max_logit = *l;
            }
        }
        if !max_logit.is_finite() {
            return Err(CoreError::NonFinite {
                op: "exact_attention",
            });
        }

        let mut denom = 0.0;
        let acc = out.row_mut(i);
        for (j, &l) in logits.iter().enumerate() {
            let w = (l - max_logit).exp();
            denom += w;
            let vr = v.row(j);
            for (a, &x) in acc.iter_mut().zip(vr) {
                *a += w * x;
            }
        }
        for a in acc.iter_mut() {
            *a /= denom;
        }

        // True-scale row sum of exp(QK^T); may overflow even though the
        // normalized output cannot.
        let d_ii = denom * max_logit.exp();
        if !d_ii.is_finite() || d_ii <= 0.0 {
            return Err(CoreError::NonFinite {
                op: "exact_attention row sum",
            });
        }
        row_sums.push(d_ii);
    }

    Ok(AttentionOutput { out, row_sums })
}

/// The attention score matrix `exp(Q K^T)`, optionally row-normalized so
/// every row sums to one.
pub fn attention_matrix(q: &Matrix, k: &Matrix, normalized: bool) -> Result<Matrix> {
    if q.cols() != k.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "attention_matrix",
            left: (q.rows(), q.cols()),
            right: (k.rows(), k.cols()),
        });
    }
    let n_q = q.rows();
    let n_k = k.rows();
    let mut out = Matrix::zeros(n_q, n_k)?;

    for i in 0..n_q {
        let qi = q.row(i);
        let row = out.row_mut(i);
        let mut max_logit = f64::NEG_INFINITY;
        for (j, r) in row.iter_mut().enumerate() {
            *r = dot(qi, k.row(j));
            if *r > max_logit {
                max_logit = *r;
            }
        }
        if !max_logit.is_finite() {
            return Err(CoreError::NonFinite {
                op: "attention_matrix",
            });
        }
        if normalized {
            let mut denom = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max_logit).exp();
                denom += *r;
            }
            for r in row.iter_mut() {
                *r /= denom;
            }
        } else {
            for r in row.iter_mut() {
                *r = r.exp();
                if !r.is_finite() {
                    return Err(CoreError::NonFinite {
                        op: "attention_matrix",
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Exact leverage scores `h_i = a_i (a^T a)^-1 a_i^T`, one per row.
///
/// Computed through a column-pivoted QR factorization: with `A P = Q R` the
/// scores are the squared row norms of Q. The Gram condition estimate from
/// R's diagonal must stay below [`linalg::GRAM_CONDITION_CAP`].
pub fn exact_leverage_scores(a: &Matrix) -> Result<Vec<f64>> {
    if a.rows() < a.cols() {
        return Err(CoreError::invalid(
            "matrix",
            format!(
                "leverage scores need rows >= cols, got {} x {}",
                a.rows(),
                a.cols()
            ),
        ));
    }
    let f = linalg::qr(a)?;
    f.check_full_rank()?;
    let mut scores = Vec::with_capacity(a.rows());
    for i in 0..a.rows() {
        scores.push(dot(f.q.row(i), f.q.row(i)));
    }
    Ok(scores)
}
