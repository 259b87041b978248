//! Generators for the synthetic key matrices the verification experiments
//! run on: the planted-subspace model (d orthonormal signal directions with
//! m noisy copies each inside a large Gaussian noise bulk), its singleton
//! regime, and the high-norm construction that defeats k-means when rows are
//! not normalized.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::linalg::orthonormal_basis;
use crate::matrix::{normalize_rows, sq_dist, Matrix};
use crate::prescore::Clustering;
use crate::rng::Rng;

/// Parameters of the planted-subspace model.
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    /// Total rows.
    pub n: usize,
    /// Dimension and number of signal directions.
    pub d: usize,
    /// Heaviness parameter in (0, 1]; each signal group has
    /// `m = ceil(1/epsilon)` rows.
    pub epsilon: f64,
    /// Signal noise constant: signal rows get noise of variance `c_s / d`
    /// per coordinate.
    pub c_s: f64,
    /// Bulk noise constant: noise rows have variance `c_n / (n epsilon)` per
    /// coordinate.
    pub c_n: f64,
    /// Scale every row to unit Euclidean norm after noise is added.
    pub normalize: bool,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(n: usize, d: usize, epsilon: f64, c_s: f64, c_n: f64, seed: u64) -> Self {
        PlantedConfig {
            n,
            d,
            epsilon,
            c_s,
            c_n,
            normalize: false,
            seed,
        }
    }

    /// Signal rows per group.
    pub fn m(&self) -> usize {
        (1.0 / self.epsilon).ceil() as usize
    }

    /// Per-coordinate standard deviation of signal noise.
    pub fn sigma_signal(&self) -> f64 {
        (self.c_s / self.d as f64).sqrt()
    }

    /// Per-coordinate standard deviation of bulk noise.
    pub fn sigma_noise(&self) -> f64 {
        (self.c_n / (self.n as f64 * self.epsilon)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(CoreError::invalid("d", "dimension must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(CoreError::invalid(
                "epsilon",
                format!("must lie in (0, 1], got {}", self.epsilon),
            ));
        }
        // The model wants n to dominate d*m; four times is the enforced floor.
        let dm = self.d * self.m();
        if self.n < 4 * dm {
            return Err(CoreError::invalid(
                "n",
                format!("need n >= 4*d*m = {}, got {}", 4 * dm, self.n),
            ));
        }
        // Zero noise constants are allowed so the degenerate limits are
        // constructible in tests; negative ones are not.
        if !(self.c_s >= 0.0 && self.c_s.is_finite()) || !(self.c_n >= 0.0 && self.c_n.is_finite())
        {
            return Err(CoreError::invalid(
                "c_s",
                "noise constants must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// A generated instance with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    /// n x d key matrix.
    pub matrix: Matrix,
    /// Group id per row: 0 for the noise bulk, j in 1..=d for signal group j.
    pub labels: Vec<usize>,
    /// d x d orthonormal basis, one signal direction per row.
    pub basis: Matrix,
    pub config: PlantedConfig,
}

impl PlantedInstance {
    /// Indices of all signal rows (label > 0).
    pub fn signal_rows(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] > 0).collect()
    }

    /// Indices of all noise rows (label 0).
    pub fn noise_rows(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == 0).collect()
    }
}

/// Draw a planted instance: a uniformly random orthonormal basis, `m` noisy
/// copies of each basis vector, a Gaussian noise bulk, and a seeded random
/// placement of rows. Normalization, when requested, happens after noise is
/// added, so an all-zero row (possible only in degenerate noiseless configs)
/// surfaces as a degenerate-row error.
pub fn generate_planted(cfg: &PlantedConfig, rng: &mut Rng) -> Result<PlantedInstance> {
    cfg.validate()?;
    let n = cfg.n;
    let d = cfg.d;
    let m = cfg.m();
    let sigma_s = cfg.sigma_signal();
    let sigma_n = cfg.sigma_noise();

    let basis = orthonormal_basis(d, rng)?;

    // Rows in canonical order: group 1..=d then the bulk.
    let mut canonical = Matrix::zeros(n, d)?;
    let mut canonical_labels = vec![0usize; n];
    let mut row = 0usize;
    for j in 0..d {
        for _ in 0..m {
            let dst = canonical.row_mut(row);
            for (x, &b) in dst.iter_mut().zip(basis.row(j)) {
                *x = b + if sigma_s > 0.0 { rng.normal(0.0, sigma_s) } else { 0.0 };
            }
            canonical_labels[row] = j + 1;
            row += 1;
        }
    }
    for i in row..n {
        let dst = canonical.row_mut(i);
        for x in dst.iter_mut() {
            *x = if sigma_n > 0.0 { rng.normal(0.0, sigma_n) } else { 0.0 };
        }
    }

    // Seeded random placement.
    let mut positions: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut positions);
    let mut matrix = Matrix::zeros(n, d)?;
    let mut labels = vec![0usize; n];
    for (src, &dst) in positions.iter().enumerate() {
        matrix.row_mut(dst).copy_from_slice(canonical.row(src));
        labels[dst] = canonical_labels[src];
    }

    let matrix = if cfg.normalize {
        normalize_rows(&matrix)?
    } else {
        matrix
    };

    Ok(PlantedInstance {
        matrix,
        labels,
        basis,
        config: cfg.clone(),
    })
}

/// The high-norm construction that defeats norm-sensitive clustering: the
/// first `d/2` rows are standard basis vectors (the relevant set S), every
/// remaining row is the single vector with `big_norm` at coordinate `d/2`.
pub fn generate_counterexample(
    n: usize,
    d: usize,
    big_norm: f64,
    rng: &Rng,
) -> Result<PlantedInstance> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(CoreError::invalid(
            "d",
            format!("dimension must be even and positive, got {d}"),
        ));
    }
    if n <= d / 2 {
        return Err(CoreError::invalid(
            "n",
            format!("need n > d/2 = {}, got {n}", d / 2),
        ));
    }
    if !(big_norm > 1.0 && big_norm.is_finite()) {
        return Err(CoreError::invalid(
            "big_norm",
            format!("must be finite and > 1, got {big_norm}"),
        ));
    }

    let half = d / 2;
    let mut matrix = Matrix::zeros(n, d)?;
    let mut labels = vec![0usize; n];
    for j in 0..half {
        matrix.set(j, j, 1.0);
        labels[j] = j + 1;
    }
    for i in half..n {
        matrix.set(i, half, big_norm);
    }

    let mut config = PlantedConfig::new(n, d, 1.0, 0.0, 0.0, rng.seed());
    config.normalize = false;
    Ok(PlantedInstance {
        matrix,
        labels,
        basis: Matrix::identity(d)?,
        config,
    })
}

/// Squared-Euclidean cost difference between a clustering's partition and the
/// instance's ground-truth partition, both evaluated with per-cluster mean
/// centroids. Non-negative (up to rounding) whenever the ground truth is the
/// optimal partition.
pub fn planted_cost_gap(inst: &PlantedInstance, clustering: &Clustering) -> Result<f64> {
    if clustering.assignment.len() != inst.matrix.rows() {
        return Err(CoreError::LengthMismatch {
            op: "planted_cost_gap",
            left: inst.matrix.rows(),
            right: clustering.assignment.len(),
        });
    }
    let given = partition_cost(&inst.matrix, &clustering.assignment);
    let truth = partition_cost(&inst.matrix, &inst.labels);
    Ok(given - truth)
}

/// Sum of squared distances to per-cluster means for an arbitrary partition.
pub fn partition_cost(points: &Matrix, partition: &[usize]) -> f64 {
    let max_id = partition.iter().copied().max().unwrap_or(0);
    let d = points.cols();
    let mut sums = vec![0.0f64; (max_id + 1) * d];
    let mut counts = vec![0usize; max_id + 1];
    for (i, &c) in partition.iter().enumerate() {
        counts[c] += 1;
        for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            for s in sums[c * d..(c + 1) * d].iter_mut() {
                *s /= count as f64;
            }
        }
    }
    partition
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), &sums[c * d..(c + 1) * d]))
        .sum()
}

/// Write an instance as a matrix file plus a sidecar label file with one
/// unsigned integer per line.
pub fn save_instance(
    inst: &PlantedInstance,
    matrix_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    inst.matrix.save(matrix_path)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(labels_path)?);
    for label in &inst.labels {
        writeln!(f, "{label}")?;
    }
    Ok(())
}

/// Read back a matrix plus sidecar labels written by [`save_instance`].
pub fn load_instance_data(
    matrix_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(Matrix, Vec<usize>)> {
    let matrix = Matrix::load(matrix_path)?;
    let reader = std::io::BufReader::new(std::fs::File::open(labels_path)?);
    let mut labels = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        labels.push(trimmed.parse::<usize>().map_err(|e| {
            CoreError::Format(format!("bad label line `{trimmed}`: {e}"))
        })?);
    }
    if labels.len() != matrix.rows() {
        return Err(CoreError::LengthMismatch {
            op: "load_instance_data",
            left: matrix.rows(),
            right: labels.len(),
        });
    }
    Ok((matrix, labels))
}
