//! Dense row-major matrix of 64-bit floats plus the row operations used by
//! every other module.
//!
//! Matrices are immutable after construction and cheap to share across
//! threads. Every public operation leaves only finite entries behind; inputs
//! that would produce NaN or infinity are rejected with an error instead.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::rng::Rng;

/// Magic bytes of the binary matrix file format.
pub const MATRIX_MAGIC: [u8; 4] = *b"PAMX";
/// Current version byte of the binary matrix file format.
pub const MATRIX_FORMAT_VERSION: u8 = 1;

/// Dense row-major matrix with 64-bit float entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build a matrix from a row-major buffer.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::EmptyDimension { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(CoreError::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(CoreError::NonFinite { op: "Matrix::new" });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::EmptyDimension { rows, cols });
        }
        Ok(Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    /// Build a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(CoreError::EmptyDimension {
                rows: rows.len(),
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(CoreError::LengthMismatch {
                    op: "Matrix::from_rows",
                    left: cols,
                    right: rows[i].len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::new(rows.len(), cols, data)
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Matrix::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Full row-major buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Overwrite one entry. The value must be finite; this is checked in
    /// debug builds.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(value.is_finite(), "matrix entries must stay finite");
        self.data[i * self.cols + j] = value;
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols)?;
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(l);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Product with the transpose, `self * other^T`. Both operands are
    /// row-major, so this is a dot product of contiguous rows.
    pub fn mul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                op: "mul_transpose",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows)?;
        for i in 0..self.rows {
            let a = self.row(i);
            let dst = out.row_mut(i);
            for (j, d) in dst.iter_mut().enumerate() {
                *d = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix {
            rows: self.cols,
            cols: self.rows,
            data: vec![0.0; self.data.len()],
        };
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// New matrix assembled from the given rows of `self`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        if indices.is_empty() {
            return Err(CoreError::EmptyDimension {
                rows: 0,
                cols: self.cols,
            });
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(CoreError::invalid(
                    "indices",
                    format!("row index {i} out of range for {} rows", self.rows),
                ));
            }
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(indices.len(), self.cols, data)
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                op: "frobenius_distance",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum.sqrt())
    }

    /// Copy scaled by a finite constant.
    pub fn scaled(&self, factor: f64) -> Result<Matrix> {
        if !factor.is_finite() {
            return Err(CoreError::NonFinite { op: "scaled" });
        }
        Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|x| x * factor).collect(),
        )
    }

    /// Write the matrix in the binary format: magic `PAMX`, version byte,
    /// two little-endian u64 dimensions, then rows*cols little-endian IEEE-754
    /// doubles in row-major order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MATRIX_MAGIC)?;
        w.write_all(&[MATRIX_FORMAT_VERSION])?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a matrix written by [`Matrix::write_to`].
    pub fn read_from<R: Read>(mut r: R) -> Result<Matrix> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MATRIX_MAGIC {
            return Err(CoreError::Format(format!(
                "bad magic {magic:?}, expected {MATRIX_MAGIC:?}"
            )));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != MATRIX_FORMAT_VERSION {
            return Err(CoreError::Format(format!(
                "unsupported version {}, expected {MATRIX_FORMAT_VERSION}",
                version[0]
            )));
        }
        let mut dim = [0u8; 8];
        r.read_exact(&mut dim)?;
        let rows = u64::from_le_bytes(dim) as usize;
        r.read_exact(&mut dim)?;
        let cols = u64::from_le_bytes(dim) as usize;
        if rows == 0 || cols == 0 {
            return Err(CoreError::EmptyDimension { rows, cols });
        }
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| CoreError::Format("dimension overflow".into()))?;
        let mut data = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Matrix::new(rows, cols, data)
    }

    /// Write to a file path.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    /// Read from a file path.
    pub fn load(path: impl AsRef<Path>) -> Result<Matrix> {
        let file = std::fs::File::open(path)?;
        Matrix::read_from(std::io::BufReader::new(file))
    }
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance between two equal-length slices.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Matrix with i.i.d. Normal(mean, std^2) entries drawn from `rng`.
///
/// `std == 0` yields the constant matrix.
pub fn gaussian_matrix(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(CoreError::EmptyDimension { rows, cols });
    }
    if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
        return Err(CoreError::invalid(
            "std",
            format!("mean/std must be finite with std >= 0, got mean={mean}, std={std}"),
        ));
    }
    let data = if std == 0.0 {
        vec![mean; rows * cols]
    } else {
        (0..rows * cols).map(|_| rng.normal(mean, std)).collect()
    };
    Matrix::new(rows, cols, data)
}

/// Copy of `m` with every row scaled to unit Euclidean norm.
///
/// A row whose norm is zero (or too small to divide by) is reported as
/// degenerate with its index.
pub fn normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let norm = dot(m.row(i), m.row(i)).sqrt();
        if norm < f64::MIN_POSITIVE {
            return Err(CoreError::DegenerateRow { row: i });
        }
        for x in out.row_mut(i) {
            *x /= norm;
        }
    }
    Ok(out)
}

/// All pairwise squared Euclidean distances: `out[i][j] = ||a_i - b_j||^2`.
///
/// Distances are accumulated term by term rather than via the norm expansion,
/// so entries are non-negative and the diagonal of `pairwise_sq_dist(a, a)`
/// is exactly zero.
pub fn pairwise_sq_dist(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "pairwise_sq_dist",
            left: (a.rows(), a.cols()),
            right: (b.rows(), b.cols()),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows())?;
    for i in 0..a.rows() {
        let ra = a.row(i);
        let dst = out.row_mut(i);
        for (j, d) in dst.iter_mut().enumerate() {
            *d = sq_dist(ra, b.row(j));
        }
    }
    Ok(out)
}
