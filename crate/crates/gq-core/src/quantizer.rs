//! Gaussian-codebook quantization: the linear-scan reference path, the
//! bisect fast path for scalar codebooks, grouped quantization with the
//! norm regularizer, and token statistics.
//!
//! The scalar paths quantize the posterior mean only; the grouped path
//! scales by sigma elementwise and subtracts `omega * ||c||`. Ties are
//! always broken toward the smallest original codebook index, which is
//! what makes the scan and bisect paths bit-identical.

use rayon::prelude::*;
use thiserror::Error;

use crate::codebook::Codebook;
use crate::tensor_io::{LatentBatch, TensorIoError, TokenGrid};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("codebook dimension {cb_m} incompatible with this path (expected {expected})")]
    DimensionMismatch { cb_m: usize, expected: usize },
    #[error("batch dimension {d} not divisible by group size {m}")]
    IndivisibleDimensions { d: usize, m: usize },
    #[error("codebook has no sorted view (m must be 1)")]
    MissingSortedView,
    #[error("config group size {cfg_m} does not match codebook dimension {cb_m}")]
    ConfigMismatch { cfg_m: usize, cb_m: usize },
    #[error("omega must be >= 0 and zero when m = 1 (omega={omega}, m={m})")]
    BadOmega { omega: f64, m: usize },
    #[error("token index {index} out of range for codebook of size {k}")]
    IndexOutOfRange { index: u32, k: usize },
    #[error(transparent)]
    Grid(#[from] TensorIoError),
}

/// Settings for the grouped path: regularization weight and group size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    /// Weight of the `-omega * ||c||` term. Must be zero when m = 1.
    pub omega: f64,
    /// Group dimension; must equal the codebook dimension.
    pub m: usize,
}

impl QuantizerConfig {
    pub fn new(omega: f64, m: usize) -> Result<Self, QuantError> {
        if !(omega >= 0.0) || (m == 1 && omega != 0.0) {
            return Err(QuantError::BadOmega { omega, m });
        }
        Ok(QuantizerConfig { omega, m })
    }
}

/// Quantization output: token grid plus the quantized latents, which
/// are exactly the selected codebook rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantResult {
    pub tokens: TokenGrid,
    pub zhat: Vec<f32>,
}

/// Instrumented operation counts for one quantization call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    /// Total comparator / distance / logit evaluations.
    pub total: u64,
    /// Worst single dimension (or group).
    pub max_per_dim: u64,
    /// Number of dimensions (or groups) processed.
    pub dims: u64,
}

impl OpCounts {
    pub fn mean_per_dim(&self) -> f64 {
        if self.dims == 0 {
            0.0
        } else {
            self.total as f64 / self.dims as f64
        }
    }
}

/// Counting hook compiled away on the fast path: `NoTally` is a ZST
/// whose `tick` is a no-op, so the monomorphized fast path carries no
/// instrumentation overhead.
trait Tally {
    fn tick(&mut self);
}

struct NoTally;

impl Tally for NoTally {
    #[inline(always)]
    fn tick(&mut self) {}
}

#[derive(Default)]
struct CountTally(u64);

impl Tally for CountTally {
    #[inline(always)]
    fn tick(&mut self) {
        self.0 += 1;
    }
}

// ---------------------------------------------------------------------------
// Scalar kernels
// ---------------------------------------------------------------------------

/// Linear scan: index of the entry minimizing |mu - c|, ties to the
/// smallest index. One distance evaluation per entry.
fn scan_one<T: Tally>(mu: f64, cb: &Codebook, tally: &mut T) -> u32 {
    let mut best = 0u32;
    let mut best_dist = f64::INFINITY;
    for j in 0..cb.k() {
        tally.tick();
        let dist = (mu - cb.scalar(j)).abs();
        if dist < best_dist {
            best_dist = dist;
            best = j as u32;
        }
    }
    best
}

/// First position in `perm[0..hi]` whose value is >= x.
fn lower_bound<T: Tally>(cb: &Codebook, perm: &[u32], x: f64, hi: usize, tally: &mut T) -> usize {
    let mut lo = 0usize;
    let mut len = hi;
    while len > 0 {
        let half = len / 2;
        let mid = lo + half;
        tally.tick();
        if cb.scalar(perm[mid] as usize) < x {
            lo = mid + 1;
            len -= half + 1;
        } else {
            len = half;
        }
    }
    lo
}

/// Bisect search over the sorted view. Emits exactly the same token as
/// `scan_one` for every input, including duplicate codebook values and
/// exact midpoints, in at most 2*ceil(log2 K) + 2 value comparisons.
fn bisect_one<T: Tally>(mu: f64, cb: &Codebook, perm: &[u32], tally: &mut T) -> u32 {
    let k = cb.k();
    if k == 1 {
        return 0;
    }
    let val = |t: usize| cb.scalar(perm[t] as usize);

    tally.tick();
    if mu <= val(0) {
        // Minimum value; ties within its run start at position 0.
        return perm[0];
    }
    tally.tick();
    if mu >= val(k - 1) {
        // Maximum value; find the start of its run for the smallest
        // original index among duplicates.
        let start = lower_bound(cb, perm, val(k - 1), k, tally);
        return perm[start];
    }

    // Invariant: val(l) < mu <= val(r).
    let mut l = 0usize;
    let mut r = k - 1;
    while l + 1 < r {
        let mid = (l + r) / 2;
        tally.tick();
        if val(mid) < mu {
            l = mid;
        } else {
            r = mid;
        }
    }

    let dlo = mu - val(l);
    let dhi = val(r) - mu;
    // val(l) < mu <= val(r) makes r the first occurrence of val(r), so
    // perm[r] is already the smallest original index on the high side.
    if dhi < dlo {
        return perm[r];
    }
    let lo_start = lower_bound(cb, perm, val(l), l + 1, tally);
    if dlo < dhi {
        perm[lo_start]
    } else {
        perm[lo_start].min(perm[r])
    }
}

// ---------------------------------------------------------------------------
// Batch drivers
// ---------------------------------------------------------------------------

fn require_scalar(batch: &LatentBatch, cb: &Codebook) -> Result<(), QuantError> {
    let _ = batch;
    if cb.m() != 1 {
        return Err(QuantError::DimensionMismatch { cb_m: cb.m(), expected: 1 });
    }
    Ok(())
}

fn scalar_result(batch: &LatentBatch, cb: &Codebook, indices: Vec<u32>) -> QuantResult {
    let zhat: Vec<f32> = indices.iter().map(|&t| cb.values()[t as usize]).collect();
    let tokens = TokenGrid::new(batch.n(), batch.d(), cb.k() as u32, indices)
        .expect("tokens are argmin results, always in range");
    QuantResult { tokens, zhat }
}

/// Full-scan quantization of each posterior mean against a scalar
/// codebook. Sigma is ignored on this path.
pub fn quantize_scan(batch: &LatentBatch, cb: &Codebook) -> Result<QuantResult, QuantError> {
    require_scalar(batch, cb)?;
    let indices: Vec<u32> = batch
        .mu()
        .par_iter()
        .map(|&mu| scan_one(mu as f64, cb, &mut NoTally))
        .collect();
    Ok(scalar_result(batch, cb, indices))
}

/// As [`quantize_scan`], with instrumented distance-evaluation counts.
pub fn quantize_scan_counted(
    batch: &LatentBatch,
    cb: &Codebook,
) -> Result<(QuantResult, OpCounts), QuantError> {
    require_scalar(batch, cb)?;
    let mut counts = OpCounts::default();
    let mut indices = Vec::with_capacity(batch.mu().len());
    for &mu in batch.mu() {
        let mut tally = CountTally::default();
        indices.push(scan_one(mu as f64, cb, &mut tally));
        counts.total += tally.0;
        counts.max_per_dim = counts.max_per_dim.max(tally.0);
        counts.dims += 1;
    }
    Ok((scalar_result(batch, cb, indices), counts))
}

/// Bisect quantization over the sorted view; output is identical to
/// [`quantize_scan`] token for token.
pub fn quantize_bisect(batch: &LatentBatch, cb: &Codebook) -> Result<QuantResult, QuantError> {
    require_scalar(batch, cb)?;
    let perm = cb.sorted_perm().ok_or(QuantError::MissingSortedView)?;
    let indices: Vec<u32> = batch
        .mu()
        .par_iter()
        .map(|&mu| bisect_one(mu as f64, cb, perm, &mut NoTally))
        .collect();
    Ok(scalar_result(batch, cb, indices))
}

/// As [`quantize_bisect`], with instrumented comparator counts.
pub fn quantize_bisect_counted(
    batch: &LatentBatch,
    cb: &Codebook,
) -> Result<(QuantResult, OpCounts), QuantError> {
    require_scalar(batch, cb)?;
    let perm = cb.sorted_perm().ok_or(QuantError::MissingSortedView)?;
    let mut counts = OpCounts::default();
    let mut indices = Vec::with_capacity(batch.mu().len());
    for &mu in batch.mu() {
        let mut tally = CountTally::default();
        indices.push(bisect_one(mu as f64, cb, perm, &mut tally));
        counts.total += tally.0;
        counts.max_per_dim = counts.max_per_dim.max(tally.0);
        counts.dims += 1;
    }
    Ok((scalar_result(batch, cb, indices), counts))
}

/// Grouped quantization: per group of `m` dimensions, the argmin over
/// all K rows of `||(mu - c) / sigma|| - omega * ||c||`, ties to the
/// smallest index. Always an exact full scan.
pub fn quantize_grouped(
    batch: &LatentBatch,
    cb: &Codebook,
    cfg: &QuantizerConfig,
) -> Result<QuantResult, QuantError> {
    let m = cb.m();
    if cfg.m != m {
        return Err(QuantError::ConfigMismatch { cfg_m: cfg.m, cb_m: m });
    }
    if !(cfg.omega >= 0.0) || (m == 1 && cfg.omega != 0.0) {
        return Err(QuantError::BadOmega { omega: cfg.omega, m });
    }
    let d = batch.d();
    if d == 0 || d % m != 0 {
        return Err(QuantError::IndivisibleDimensions { d, m });
    }
    let groups_per_vec = d / m;
    let total_groups = batch.n() * groups_per_vec;
    let omega = cfg.omega;

    let indices: Vec<u32> = (0..total_groups)
        .into_par_iter()
        .map(|flat| {
            let i = flat / groups_per_vec;
            let g = flat % groups_per_vec;
            let base = g * m;
            let mut best = 0u32;
            let mut best_obj = f64::INFINITY;
            for j in 0..cb.k() {
                let row = cb.row(j);
                let mut dist_sq = 0.0f64;
                let mut norm_sq = 0.0f64;
                for l in 0..m {
                    let c = row[l] as f64;
                    let diff = (batch.mu_at(i, base + l) - c) / batch.sigma_at(i, base + l);
                    dist_sq += diff * diff;
                    norm_sq += c * c;
                }
                let obj = dist_sq.sqrt() - omega * norm_sq.sqrt();
                if obj < best_obj {
                    best_obj = obj;
                    best = j as u32;
                }
            }
            best
        })
        .collect();

    let mut zhat = Vec::with_capacity(batch.n() * d);
    for &t in &indices {
        zhat.extend_from_slice(cb.row(t as usize));
    }
    let tokens = TokenGrid::new(batch.n(), groups_per_vec, cb.k() as u32, indices)
        .expect("argmin tokens in range");
    Ok(QuantResult { tokens, zhat })
}

/// Expand tokens back to latent values by concatenating codebook rows.
pub fn dequantize(tokens: &TokenGrid, cb: &Codebook) -> Result<Vec<f32>, QuantError> {
    let mut out = Vec::with_capacity(tokens.n() * tokens.g() * cb.m());
    for &t in tokens.indices() {
        if t as usize >= cb.k() {
            return Err(QuantError::IndexOutOfRange { index: t, k: cb.k() });
        }
        out.extend_from_slice(cb.row(t as usize));
    }
    Ok(out)
}

/// Codebook usage and entropy of a token grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenStats {
    /// Fraction of the K ids emitted at least once, in [0, 1].
    pub usage: f64,
    /// Shannon entropy of the empirical token histogram, in bits.
    pub entropy_bits: f64,
}

pub fn token_stats(tokens: &TokenGrid, k: u32) -> Result<TokenStats, QuantError> {
    let mut hist = vec![0u64; k as usize];
    for &t in tokens.indices() {
        if t >= k {
            return Err(QuantError::IndexOutOfRange { index: t, k: k as usize });
        }
        hist[t as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Ok(TokenStats { usage: 0.0, entropy_bits: 0.0 });
    }
    let used = hist.iter().filter(|&&c| c > 0).count();
    let entropy_bits = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    Ok(TokenStats { usage: used as f64 / k as f64, entropy_bits })
}
