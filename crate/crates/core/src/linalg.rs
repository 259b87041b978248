//! Small dense linear-algebra kernels: column-pivoted Householder QR,
//! triangular solves, and random orthonormal bases.
//!
//! Sizes in this crate are desk scale (thousands of rows, tens of columns),
//! so the O(m n^2) direct algorithms below are more than fast enough and keep
//! the crate dependency-free.

use crate::error::{CoreError, Result};
use crate::matrix::{dot, gaussian_matrix, Matrix};
use crate::rng::Rng;

/// Condition-number cap on the Gram matrix `A^T A`; beyond this the factor
/// is reported as numerically singular.
pub const GRAM_CONDITION_CAP: f64 = 1e12;

/// Thin QR factorization of a column-permuted matrix: `A P = Q R`.
#[derive(Debug, Clone)]
pub struct QrFactors {
    /// m x n matrix with orthonormal columns.
    pub q: Matrix,
    /// n x n upper-triangular factor with non-increasing |diagonal|.
    pub r: Matrix,
    /// Column permutation: pivoted column `j` is original column `perm[j]`.
    pub perm: Vec<usize>,
}

impl QrFactors {
    /// Condition-number estimate of the Gram matrix `A^T A`, from the ratio
    /// of extreme R diagonal magnitudes squared.
    pub fn gram_condition_estimate(&self) -> f64 {
        let n = self.r.cols();
        let first = self.r.get(0, 0).abs();
        let last = self.r.get(n - 1, n - 1).abs();
        if last == 0.0 {
            f64::INFINITY
        } else {
            let ratio = first / last;
            ratio * ratio
        }
    }

    /// Error out when the factorization indicates a singular Gram matrix.
    pub fn check_full_rank(&self) -> Result<()> {
        let cond = self.gram_condition_estimate();
        if !cond.is_finite() || cond > GRAM_CONDITION_CAP {
            return Err(CoreError::SingularGram {
                cond,
                cap: GRAM_CONDITION_CAP,
            });
        }
        Ok(())
    }
}

/// Column-pivoted Householder QR of an m x n matrix with m >= n.
pub fn qr(a: &Matrix) -> Result<QrFactors> {
    let m = a.rows();
    let n = a.cols();
    if m < n {
        return Err(CoreError::invalid(
            "matrix",
            format!("QR requires rows >= cols, got {m} x {n}"),
        ));
    }

    // Column-major working copy: pivoting and reflections touch columns.
    let mut work: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut householder: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        // Pivot on the column with the largest residual norm below row k.
        let mut best = k;
        let mut best_norm = residual_sq_norm(&work[k], k);
        for j in (k + 1)..n {
            let norm = residual_sq_norm(&work[j], k);
            if norm > best_norm {
                best = j;
                best_norm = norm;
            }
        }
        work.swap(k, best);
        perm.swap(k, best);

        // Householder vector annihilating column k below the diagonal.
        let norm = best_norm.sqrt();
        let mut v = vec![0.0; m - k];
        v.copy_from_slice(&work[k][k..]);
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let v_sq = dot(&v, &v);

        if v_sq > 0.0 {
            for col in work.iter_mut().skip(k) {
                let tail = &mut col[k..];
                let coeff = 2.0 * dot(tail, &v) / v_sq;
                for (t, h) in tail.iter_mut().zip(&v) {
                    *t -= coeff * h;
                }
            }
        }
        // The reflection maps column k to alpha * e_k exactly; store it.
        work[k][k] = alpha;
        for x in work[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        householder.push(v);
    }

    let mut r = Matrix::zeros(n, n)?;
    for j in 0..n {
        for i in 0..=j {
            r.set(i, j, work[j][i]);
        }
    }

    // Accumulate the thin Q by applying the reflections to I's first n columns.
    let mut q = Matrix::zeros(m, n)?;
    for j in 0..n {
        let mut col = vec![0.0; m];
        col[j] = 1.0;
        for k in (0..n).rev() {
            let v = &householder[k];
            let v_sq = dot(v, v);
            if v_sq == 0.0 {
                continue;
            }
            let tail = &mut col[k..];
            let coeff = 2.0 * dot(tail, v) / v_sq;
            for (t, h) in tail.iter_mut().zip(v) {
                *t -= coeff * h;
            }
        }
        for i in 0..m {
            q.set(i, j, col[i]);
        }
    }

    Ok(QrFactors { q, r, perm })
}

fn residual_sq_norm(col: &[f64], from: usize) -> f64 {
    col[from..].iter().map(|x| x * x).sum()
}

/// Solve the upper-triangular system `R x = b` by back substitution.
pub fn solve_upper(r: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.cols();
    if b.len() != n {
        return Err(CoreError::LengthMismatch {
            op: "solve_upper",
            left: n,
            right: b.len(),
        });
    }
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= r.get(i, j) * x[j];
        }
        let d = r.get(i, i);
        if d == 0.0 {
            return Err(CoreError::SingularGram {
                cond: f64::INFINITY,
                cap: GRAM_CONDITION_CAP,
            });
        }
        x[i] = s / d;
    }
    Ok(x)
}

/// Solve `R^T y = b` (forward substitution on the transposed upper factor).
pub fn solve_upper_transpose(r: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.cols();
    if b.len() != n {
        return Err(CoreError::LengthMismatch {
            op: "solve_upper_transpose",
            left: n,
            right: b.len(),
        });
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for j in 0..i {
            s -= r.get(j, i) * y[j];
        }
        let d = r.get(i, i);
        if d == 0.0 {
            return Err(CoreError::SingularGram {
                cond: f64::INFINITY,
                cap: GRAM_CONDITION_CAP,
            });
        }
        y[i] = s / d;
    }
    Ok(y)
}

/// Uniformly random orthonormal basis of R^d, one basis vector per row.
///
/// Built as the Q factor of a Gaussian matrix with the sign convention that
/// makes R's diagonal positive, which pins the basis down deterministically
/// for a given rng stream.
pub fn orthonormal_basis(d: usize, rng: &mut Rng) -> Result<Matrix> {
    let g = gaussian_matrix(rng, d, d, 0.0, 1.0)?;
    let f = qr(&g)?;
    let mut basis = Matrix::zeros(d, d)?;
    for j in 0..d {
        let flip = if f.r.get(j, j) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            basis.set(j, i, flip * f.q.get(i, j));
        }
    }
    Ok(basis)
}
