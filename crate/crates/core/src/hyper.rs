//! LSH-sorted block attention with residual sampling, and its composition
//! with key pre-scoring.
//!
//! Queries and keys are hashed with shared random hyperplanes, ordered so
//! that codes adjacent in the ordering differ in few bits (Gray-code rank),
//! and exact attention is evaluated inside consecutive blocks along the
//! sorted diagonal. Uniformly sampled residual keys outside the block
//! unbias the estimate; their contributions are scaled by
//! `(n - in_block) / residual_samples`.

use std::time::{Duration, Instant};

use crate::attention::exact_attention;
use crate::error::{CoreError, Result};
use crate::matrix::{dot, Matrix};
use crate::prescore::{prescore, PreScoreConfig};
use crate::rng::Rng;

/// Configuration of the block-attention stage.
#[derive(Debug, Clone)]
pub struct HyperConfig {
    /// Number of random hyperplanes (bits per hash code), at most 63.
    pub lsh_bits: usize,
    /// Rows per diagonal block along the sorted order.
    pub block_size: usize,
    /// Uniformly sampled residual keys per query; zero disables sampling.
    pub residual_samples: usize,
    /// Key counts below this threshold use the exact oracle instead.
    pub min_seq_len: usize,
    /// Seed used by callers that construct the op rng from configuration.
    pub seed: u64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            lsh_bits: 8,
            block_size: 64,
            residual_samples: 0,
            min_seq_len: 0,
            seed: 0,
        }
    }
}

impl HyperConfig {
    fn validate(&self, n_keys: usize) -> Result<()> {
        if self.lsh_bits == 0 || self.lsh_bits > 63 {
            return Err(CoreError::invalid(
                "lsh_bits",
                format!("must be in 1..=63, got {}", self.lsh_bits),
            ));
        }
        if self.block_size == 0 {
            return Err(CoreError::invalid("block_size", "must be >= 1"));
        }
        if self.residual_samples > n_keys {
            return Err(CoreError::invalid(
                "residual_samples",
                format!("{} exceeds key count {n_keys}", self.residual_samples),
            ));
        }
        Ok(())
    }
}

/// Configuration of the pre-scored composition.
#[derive(Debug, Clone)]
pub struct PreScoredConfig {
    pub prescore: PreScoreConfig,
    pub hyper: HyperConfig,
    /// Fallback fraction: when fewer than `delta * n` keys survive scoring,
    /// plain block attention over the full key set is used instead.
    pub delta: f64,
    /// Keep residual sampling active inside the pre-scored call (off by
    /// default: the retained set replaces it).
    pub keep_residual: bool,
}

impl PreScoredConfig {
    pub fn new(prescore: PreScoreConfig, hyper: HyperConfig) -> Self {
        PreScoredConfig {
            prescore,
            hyper,
            delta: 0.0,
            keep_residual: false,
        }
    }
}

/// Approximate attention output with bookkeeping.
#[derive(Debug, Clone)]
pub struct AttentionResult {
    /// n x d_v approximate attention output.
    pub out: Matrix,
    /// Estimated row sums of the unnormalized score matrix, all positive.
    pub row_sums: Vec<f64>,
    /// Diagonal blocks evaluated (zero on the exact-fallback path).
    pub blocks_evaluated: usize,
    /// Keys the output attends over.
    pub keys_retained: usize,
    /// Whether the exact oracle was used because `n < min_seq_len`.
    pub exact_fallback: bool,
    /// Whether pre-scoring fell back to the full key set (`|S| < delta n`).
    pub prescore_fallback: bool,
    /// Wall time of the call.
    pub wall_time: Duration,
}

/// Hash each row into `lsh_bits` sign bits of projections onto shared
/// Gaussian hyperplanes drawn from `rng`. Identical rows get identical
/// codes; a negated row flips every bit.
pub fn angular_lsh_codes(m: &Matrix, lsh_bits: usize, rng: &mut Rng) -> Result<Vec<u64>> {
    if lsh_bits == 0 || lsh_bits > 63 {
        return Err(CoreError::invalid(
            "lsh_bits",
            format!("must be in 1..=63, got {lsh_bits}"),
        ));
    }
    let d = m.cols();
    let planes: Vec<Vec<f64>> = (0..lsh_bits)
        .map(|_| (0..d).map(|_| rng.next_standard_normal()).collect())
        .collect();
    let mut codes = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut code = 0u64;
        for (b, plane) in planes.iter().enumerate() {
            if dot(row, plane) >= 0.0 {
                code |= 1 << b;
            }
        }
        codes.push(code);
    }
    Ok(codes)
}

/// Rank of a code in the Gray-code enumeration: the binary index whose Gray
/// code equals `code`. Sorting codes by this rank makes adjacent codes differ
/// in one bit.
pub fn gray_rank(code: u64) -> u64 {
    let mut x = code;
    x ^= x >> 1;
    x ^= x >> 2;
    x ^= x >> 4;
    x ^= x >> 8;
    x ^= x >> 16;
    x ^= x >> 32;
    x
}

/// The block structure block attention evaluates: keys in Gray-code order
/// split into consecutive runs of roughly `block_size` whole hash buckets,
/// and every query routed to the run whose code interval contains the
/// query's own code.
#[derive(Debug, Clone)]
pub struct BlockPlan {
    /// Original key indices in sorted order.
    pub key_order: Vec<usize>,
    /// Start rank of each block plus a final sentinel equal to the key
    /// count; strictly increasing.
    pub key_cuts: Vec<usize>,
    pub num_blocks: usize,
    /// Original query indices grouped by block, each group in query code
    /// order.
    pub queries_by_block: Vec<Vec<usize>>,
}

impl BlockPlan {
    /// Sorted-rank range of keys in block `b`.
    pub fn key_range(&self, b: usize) -> std::ops::Range<usize> {
        self.key_cuts[b]..self.key_cuts[b + 1]
    }
}

/// Hash queries and keys with shared hyperplanes and derive the block plan.
///
/// Key ordering is by Gray rank of the code, then by row content, then by
/// index; the content tie-break makes the plan invariant to row permutations
/// of the inputs. Cuts target `block_size` keys per block and snap forward
/// to the next bucket boundary, so a hash bucket is never split (a bucket
/// larger than `block_size` becomes one larger block). Each query is then
/// assigned to the block whose Gray-rank interval contains the query's code,
/// so queries meet the keys they are angularly closest to even when the
/// query and key code distributions differ.
pub fn block_plan(
    q: &Matrix,
    k: &Matrix,
    lsh_bits: usize,
    block_size: usize,
    rng: &mut Rng,
) -> Result<BlockPlan> {
    let n_q = q.rows();
    let n_k = k.rows();

    // One code computation over stacked rows so queries and keys share the
    // same hyperplanes.
    let mut stacked_data = Vec::with_capacity((n_q + n_k) * k.cols());
    stacked_data.extend_from_slice(k.data());
    stacked_data.extend_from_slice(q.data());
    let stacked = Matrix::new(n_k + n_q, k.cols(), stacked_data)?;
    let codes = angular_lsh_codes(&stacked, lsh_bits, rng)?;

    let key_order = sorted_order(&codes[..n_k], k);
    let query_order = sorted_order(&codes[n_k..], q);
    let key_gray: Vec<u64> = key_order.iter().map(|&i| gray_rank(codes[i])).collect();
    let nominal_blocks = n_k.div_ceil(block_size).max(1);

    let mut key_cuts = vec![0usize];
    for b in 1..nominal_blocks {
        let mut cut = b * n_k / nominal_blocks;
        while cut < n_k && key_gray[cut] == key_gray[cut - 1] {
            cut += 1;
        }
        if cut < n_k && cut > *key_cuts.last().unwrap() {
            key_cuts.push(cut);
        }
    }
    key_cuts.push(n_k);
    let num_blocks = key_cuts.len() - 1;

    // Gray-rank lower boundaries of blocks 1..num_blocks; block 0 is
    // unbounded below.
    let bounds: Vec<u64> = key_cuts[1..num_blocks]
        .iter()
        .map(|&cut| key_gray[cut])
        .collect();
    let mut queries_by_block: Vec<Vec<usize>> = vec![Vec::new(); num_blocks];
    for &qi in &query_order {
        let g = gray_rank(codes[n_k + qi]);
        let block = bounds.partition_point(|&bound| bound <= g);
        queries_by_block[block].push(qi);
    }

    Ok(BlockPlan {
        key_order,
        key_cuts,
        num_blocks,
        queries_by_block,
    })
}

fn sorted_order(codes: &[u64], rows: &Matrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..codes.len()).collect();
    order.sort_by(|&a, &b| {
        gray_rank(codes[a])
            .cmp(&gray_rank(codes[b]))
            .then_with(|| compare_rows(rows.row(a), rows.row(b)))
            .then(a.cmp(&b))
    });
    order
}

fn compare_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = x.total_cmp(y);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// LSH-sorted block attention.
///
/// Key counts below `cfg.min_seq_len` take the exact path bit-for-bit.
/// Otherwise each query attends exactly to its diagonal block of sorted keys
/// plus `cfg.residual_samples` keys sampled uniformly from outside the block
/// (child rng per query row, split by row index), with residual numerator and
/// row-sum contributions scaled by `(n - in_block) / residual_samples`.
pub fn hyper_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cfg: &HyperConfig,
    rng: &mut Rng,
) -> Result<AttentionResult> {
    let start = Instant::now();
    if q.cols() != k.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "hyper_attention q/k",
            left: (q.rows(), q.cols()),
            right: (k.rows(), k.cols()),
        });
    }
    if k.rows() != v.rows() {
        return Err(CoreError::ShapeMismatch {
            op: "hyper_attention k/v",
            left: (k.rows(), k.cols()),
            right: (v.rows(), v.cols()),
        });
    }
    let n_k = k.rows();
    cfg.validate(n_k)?;

    if n_k < cfg.min_seq_len {
        let exact = exact_attention(q, k, v)?;
        return Ok(AttentionResult {
            out: exact.out,
            row_sums: exact.row_sums,
            blocks_evaluated: 0,
            keys_retained: n_k,
            exact_fallback: true,
            prescore_fallback: false,
            wall_time: start.elapsed(),
        });
    }

    let plan = block_plan(q, k, cfg.lsh_bits, cfg.block_size, rng)?;
    let n_q = q.rows();
    let d_v = v.cols();
    let mut out = Matrix::zeros(n_q, d_v)?;
    let mut row_sums = vec![0.0f64; n_q];

    let mut block_logits: Vec<f64> = Vec::new();
    let mut residual_logits: Vec<(usize, f64)> = Vec::new();

    for b in 0..plan.num_blocks {
        if plan.queries_by_block[b].is_empty() {
            continue;
        }
        let k_range = plan.key_range(b);
        let in_block = k_range.len();
        let complement = n_k - in_block;
        // When the block covers most keys, rejection sampling stalls; fall
        // back to an explicit complement list shared by the whole block.
        let complement_list: Option<Vec<usize>> =
            if cfg.residual_samples > 0 && complement > 0 && complement * 2 < n_k {
                Some(
                    (0..n_k)
                        .filter(|rank| !k_range.contains(rank))
                        .map(|rank| plan.key_order[rank])
                        .collect(),
                )
            } else {
                None
            };

        for &qi in &plan.queries_by_block[b] {
            let qrow = q.row(qi);

            block_logits.clear();
            let mut max_logit = f64::NEG_INFINITY;
            for rank in k_range.clone() {
                let j = plan.key_order[rank];
                let l = dot(qrow, k.row(j));
                if l > max_logit {
                    max_logit = l;
                }
                block_logits.push(l);
            }

            residual_logits.clear();
            if cfg.residual_samples > 0 && complement > 0 {
                let mut child = rng.split(qi as u64);
                for _ in 0..cfg.residual_samples {
                    let j = match &complement_list {
                        Some(list) => list[child.uniform_index(list.len())],
                        None => loop {
                            let rank = child.uniform_index(n_k);
                            if !k_range.contains(&rank) {
                                break plan.key_order[rank];
                            }
                        },
                    };
                    let l = dot(qrow, k.row(j));
                    if l > max_logit {
                        max_logit = l;
                    }
                    residual_logits.push((j, l));
                }
            }

            if !max_logit.is_finite() {
                return Err(CoreError::NonFinite {
                    op: "hyper_attention",
                });
            }

            let acc = out.row_mut(qi);
            let mut denom = 0.0;
            for (rank, &l) in k_range.clone().zip(&block_logits) {
                let w = (l - max_logit).exp();
                denom += w;
                let vr = v.row(plan.key_order[rank]);
                for (a, &x) in acc.iter_mut().zip(vr) {
                    *a += w * x;
                }
            }
            if !residual_logits.is_empty() {
                let scale = complement as f64 / cfg.residual_samples as f64;
                for &(j, l) in &residual_logits {
                    let w = scale * (l - max_logit).exp();
                    denom += w;
                    let vr = v.row(j);
                    for (a, &x) in acc.iter_mut().zip(vr) {
                        *a += w * x;
                    }
                }
            }

            if denom <= 0.0 || !denom.is_finite() {
                return Err(CoreError::ZeroRowSum { row: qi });
            }
            for a in acc.iter_mut() {
                *a /= denom;
            }
            let true_scale_sum = denom * max_logit.exp();
            if !true_scale_sum.is_finite() || true_scale_sum <= 0.0 {
                return Err(CoreError::NonFinite {
                    op: "hyper_attention row sum",
                });
            }
            row_sums[qi] = true_scale_sum;
        }
    }

    Ok(AttentionResult {
        out,
        row_sums,
        blocks_evaluated: plan.num_blocks,
        keys_retained: n_k,
        exact_fallback: false,
        prescore_fallback: false,
        wall_time: start.elapsed(),
    })
}

/// Pre-scored block attention: score the keys, retain the selected set, and
/// run block attention with queries attending only to retained keys.
///
/// When fewer than `delta * n` keys survive scoring the call falls back to
/// plain block attention over the full key set. Residual sampling inside the
/// pre-scored call is disabled unless `keep_residual` is set; the retained
/// set plays that role.
pub fn prescored_hyper_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cfg: &PreScoredConfig,
    rng: &mut Rng,
) -> Result<AttentionResult> {
    if !(0.0..=1.0).contains(&cfg.delta) {
        return Err(CoreError::invalid(
            "delta",
            format!("must lie in [0, 1], got {}", cfg.delta),
        ));
    }
    let start = Instant::now();
    let selection = prescore(k, &cfg.prescore, rng)?;

    if (selection.indices.len() as f64) < cfg.delta * k.rows() as f64 {
        let mut result = hyper_attention(q, k, v, &cfg.hyper, rng)?;
        result.prescore_fallback = true;
        result.wall_time = start.elapsed();
        return Ok(result);
    }

    let k_selected = k.select_rows(&selection.indices)?;
    let v_selected = v.select_rows(&selection.indices)?;
    let mut inner = cfg.hyper.clone();
    if cfg.keep_residual {
        inner.residual_samples = inner.residual_samples.min(k_selected.rows());
    } else {
        inner.residual_samples = 0;
    }
    let mut result = hyper_attention(q, &k_selected, &v_selected, &inner, rng)?;
    result.wall_time = start.elapsed();
    Ok(result)
}
