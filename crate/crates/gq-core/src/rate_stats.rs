//! Closed-form Gaussian KL divergences against the N(0,1) prior,
//! per-dimension bits-back statistics, and codebook-size selection.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::tensor_io::LatentBatch;

#[derive(Debug, Error)]
pub enum RateStatsError {
    #[error("sigma must be > 0, got {0}")]
    NonPositiveSigma(f64),
    #[error("batch has no samples")]
    EmptyBatch,
    #[error("d = {d} is not divisible by group size m = {m}")]
    IndivisibleDimensions { d: usize, m: usize },
}

/// KL(N(mu, sigma^2) || N(0,1)) in nats:
/// 0.5 * (mu^2 + sigma^2 - ln sigma^2 - 1).
///
/// Non-negative, zero exactly at (mu, sigma) = (0, 1).
pub fn kl_nats(mu: f64, sigma: f64) -> Result<f64, RateStatsError> {
    if !(sigma > 0.0) {
        return Err(RateStatsError::NonPositiveSigma(sigma));
    }
    Ok(kl_nats_unchecked(mu, sigma))
}

/// Same divergence in bits.
pub fn kl_bits(mu: f64, sigma: f64) -> Result<f64, RateStatsError> {
    Ok(kl_nats(mu, sigma)? / LN_2)
}

#[inline]
pub(crate) fn kl_nats_unchecked(mu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    // Clamp tiny negative round-off so the zero at (0,1) stays exact.
    (0.5 * (mu * mu + s2 - s2.ln() - 1.0)).max(0.0)
}

#[inline]
pub(crate) fn kl_bits_unchecked(mu: f64, sigma: f64) -> f64 {
    kl_nats_unchecked(mu, sigma) / LN_2
}

/// How the min/max fields of [`RateStats`] aggregate the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extremes {
    /// Min/max over the d batch-averaged per-dimension rates.
    #[default]
    PerDimension,
    /// Min/max over every (sample, dimension) pair.
    PerSample,
}

/// Bits-back rate summary for a batch: the batch-mean rate of every
/// dimension, plus min/mean/max aggregates in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RateStats {
    per_dim_bits: Vec<f64>,
    mean_bits: f64,
    min_bits: f64,
    max_bits: f64,
}

impl RateStats {
    /// Batch-mean KL rate of each dimension, in bits.
    pub fn per_dim_bits(&self) -> &[f64] {
        &self.per_dim_bits
    }

    pub fn mean_bits(&self) -> f64 {
        self.mean_bits
    }

    pub fn min_bits(&self) -> f64 {
        self.min_bits
    }

    pub fn max_bits(&self) -> f64 {
        self.max_bits
    }
}

/// Summarize a batch with per-dimension extremes (the default
/// aggregation; see [`batch_rate_stats_with`] for the alternative).
pub fn batch_rate_stats(batch: &LatentBatch) -> Result<RateStats, RateStatsError> {
    batch_rate_stats_with(batch, Extremes::PerDimension)
}

pub fn batch_rate_stats_with(
    batch: &LatentBatch,
    extremes: Extremes,
) -> Result<RateStats, RateStatsError> {
    let (n, d) = (batch.n(), batch.d());
    if n == 0 || d == 0 {
        return Err(RateStatsError::EmptyBatch);
    }
    let mut per_dim = vec![0.0f64; d];
    let mut sample_min = f64::INFINITY;
    let mut sample_max = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..d {
            let b = kl_bits_unchecked(batch.mu_at(i, j), batch.sigma_at(i, j));
            per_dim[j] += b;
            sample_min = sample_min.min(b);
            sample_max = sample_max.max(b);
        }
    }
    for b in &mut per_dim {
        *b /= n as f64;
    }
    let mean = per_dim.iter().sum::<f64>() / d as f64;
    let (min, max) = match extremes {
        Extremes::PerDimension => (
            per_dim.iter().cloned().fold(f64::INFINITY, f64::min),
            per_dim.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
        Extremes::PerSample => (sample_min, sample_max),
    };
    Ok(RateStats { per_dim_bits: per_dim, mean_bits: mean, min_bits: min, max_bits: max })
}

/// Recommended codebook size exponent: the mean bits-back rate rounded
/// half-to-even, clamped to at least 1.
pub fn recommend_log2_k(stats: &RateStats) -> u32 {
    let rounded = stats.mean_bits().round_ties_even();
    rounded.max(1.0) as u32
}

/// Batch-mean summed KL bits per m-dimensional group.
///
/// Group `g` of a vector covers dimensions `g*m .. g*m + m`; the
/// returned vector has `d/m` entries.
pub fn grouped_rate_bits(batch: &LatentBatch, m: usize) -> Result<Vec<f64>, RateStatsError> {
    let (n, d) = (batch.n(), batch.d());
    if n == 0 || d == 0 {
        return Err(RateStatsError::EmptyBatch);
    }
    if m == 0 || d % m != 0 {
        return Err(RateStatsError::IndivisibleDimensions { d, m });
    }
    let groups = d / m;
    let mut out = vec![0.0f64; groups];
    for i in 0..n {
        for g in 0..groups {
            let mut sum = 0.0;
            for l in 0..m {
                let j = g * m + l;
                sum += kl_bits_unchecked(batch.mu_at(i, j), batch.sigma_at(i, j));
            }
            out[g] += sum;
        }
    }
    for b in &mut out {
        *b /= n as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    /// Numerical-quadrature oracle for KL(N(mu,s^2) || N(0,1)):
    /// integrate q(z) * ln(q(z)/p(z)) by Simpson's rule over mu +/- 12s.
    fn kl_quadrature(mu: f64, sigma: f64) -> f64 {
        let lo = mu - 12.0 * sigma;
        let hi = mu + 12.0 * sigma;
        let steps = 20_000usize; // even
        let h = (hi - lo) / steps as f64;
        let integrand = |z: f64| {
            let q = (-0.5 * ((z - mu) / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            if q == 0.0 {
                return 0.0;
            }
            let log_ratio = -0.5 * ((z - mu) / sigma).powi(2) - sigma.ln() + 0.5 * z * z;
            q * log_ratio
        };
        let mut acc = integrand(lo) + integrand(hi);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(lo + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn kl_nats_basics() {
        assert_eq!(kl_nats(0.0, 1.0).unwrap(), 0.0);
        assert!((kl_nats(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(kl_nats(0.0, 0.0), Err(RateStatsError::NonPositiveSigma(_))));
        assert!(matches!(kl_nats(0.0, -1.0), Err(RateStatsError::NonPositiveSigma(_))));
    }

    #[test]
    fn kl_nats_agrees_with_quadrature_oracle() {
        // (0.5, 0.3) is the reference point: closed form 0.8739728043.
        for (mu, sigma) in [(0.5, 0.3), (0.0, 1.0), (2.0, 0.7), (-1.5, 2.0), (0.1, 0.05)] {
            let closed = kl_nats(mu, sigma).unwrap();
            let quad = kl_quadrature(mu, sigma);
            assert!(
                (closed - quad).abs() < 1e-9,
                "mu={mu} sigma={sigma}: closed={closed} quad={quad}"
            );
        }
        assert!((kl_nats(0.5, 0.3).unwrap() - 0.873972804325936).abs() < 1e-12);
    }

    #[test]
    fn kl_bits_is_nats_over_ln2() {
        assert!((kl_bits(1.0, 1.0).unwrap() - 0.721347520444482).abs() < 1e-12);
        let rng = CounterRng::new(5);
        for i in 0..1000u64 {
            let mu = rng.normal(2 * i) * 3.0;
            let sigma = rng.uniform(2 * i + 1) * 4.0 + 1e-6;
            let nats = kl_nats(mu, sigma).unwrap();
            let bits = kl_bits(mu, sigma).unwrap();
            assert!((bits * LN_2 - nats).abs() <= 1e-12 * nats.max(1.0));
        }
    }

    #[test]
    fn kl_zero_only_at_standard_normal() {
        // Grid minimization: the divergence is positive everywhere else.
        for i in -20..=20 {
            for j in 1..=40 {
                let mu = i as f64 * 0.25;
                let sigma = j as f64 * 0.1;
                let v = kl_nats(mu, sigma).unwrap();
                if mu == 0.0 && (sigma - 1.0).abs() < 1e-12 {
                    assert_eq!(v, 0.0);
                } else {
                    assert!(v > 0.0, "kl({mu},{sigma}) = {v}");
                }
            }
        }
    }

    #[test]
    fn kl_is_convex_in_mu() {
        let h = 1e-4;
        for sigma in [0.3, 1.0, 2.5] {
            for i in -10..=10 {
                let mu = i as f64 * 0.37;
                let f = |m: f64| kl_nats(m, sigma).unwrap();
                let second = (f(mu + h) - 2.0 * f(mu) + f(mu - h)) / (h * h);
                assert!(second >= -1e-6, "sigma={sigma} mu={mu} second={second}");
            }
        }
    }

    fn demo_batch() -> LatentBatch {
        LatentBatch::new(1, 2, vec![1.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn batch_stats_identity_posterior_is_zero() {
        let b = LatentBatch::new(4, 3, vec![0.0; 12], vec![1.0; 12]).unwrap();
        let s = batch_rate_stats(&b).unwrap();
        assert_eq!(s.mean_bits(), 0.0);
        assert_eq!(s.min_bits(), 0.0);
        assert_eq!(s.max_bits(), 0.0);
    }

    #[test]
    fn batch_stats_two_dims() {
        let s = batch_rate_stats(&demo_batch()).unwrap();
        let half_bit = 0.721347520444482;
        assert!((s.per_dim_bits()[0] - half_bit).abs() < 1e-12);
        assert_eq!(s.per_dim_bits()[1], 0.0);
        assert!((s.mean_bits() - half_bit / 2.0).abs() < 1e-12);
        assert_eq!(s.min_bits(), 0.0);
        assert!((s.max_bits() - half_bit).abs() < 1e-12);
    }

    #[test]
    fn batch_stats_rejects_empty() {
        let b = LatentBatch::new(0, 3, vec![], vec![]).unwrap();
        assert!(matches!(batch_rate_stats(&b), Err(RateStatsError::EmptyBatch)));
    }

    #[test]
    fn batch_stats_permutation_invariant_over_samples() {
        let rng = CounterRng::new(17);
        let n = 8;
        let d = 5;
        let mu: Vec<f32> = (0..n * d).map(|i| rng.normal(i as u64) as f32).collect();
        let sigma: Vec<f32> =
            (0..n * d).map(|i| (rng.uniform(500 + i as u64) * 2.0 + 0.05) as f32).collect();
        let b1 = LatentBatch::new(n, d, mu.clone(), sigma.clone()).unwrap();
        // Reverse sample order.
        let rev = |v: &[f32]| -> Vec<f32> {
            (0..n).rev().flat_map(|i| v[i * d..(i + 1) * d].to_vec()).collect()
        };
        let b2 = LatentBatch::new(n, d, rev(&mu), rev(&sigma)).unwrap();
        let s1 = batch_rate_stats(&b1).unwrap();
        let s2 = batch_rate_stats(&b2).unwrap();
        for (a, b) in s1.per_dim_bits().iter().zip(s2.per_dim_bits()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn per_sample_extremes_widen_the_range() {
        // Two samples whose dimension rates differ; per-dimension
        // averaging hides the per-sample extremes.
        let b = LatentBatch::new(2, 1, vec![0.0, 2.0], vec![1.0, 1.0]).unwrap();
        let per_dim = batch_rate_stats_with(&b, Extremes::PerDimension).unwrap();
        let per_sample = batch_rate_stats_with(&b, Extremes::PerSample).unwrap();
        assert!(per_sample.min_bits() < per_dim.min_bits());
        assert!(per_sample.max_bits() > per_dim.max_bits());
        assert_eq!(per_sample.mean_bits(), per_dim.mean_bits());
    }

    #[test]
    fn recommendation_rounds_half_to_even_and_clamps() {
        let stats = |mean: f64| RateStats {
            per_dim_bits: vec![mean],
            mean_bits: mean,
            min_bits: mean,
            max_bits: mean,
        };
        assert_eq!(recommend_log2_k(&stats(3.99)), 4);
        assert_eq!(recommend_log2_k(&stats(0.2)), 1);
        assert_eq!(recommend_log2_k(&stats(16.5)), 16);
        assert_eq!(recommend_log2_k(&stats(15.5)), 16);
    }

    /// mu giving exactly `bits` of divergence at sigma = 1.
    fn mu_for_bits(bits: f64) -> f32 {
        ((2.0 * bits * LN_2).sqrt()) as f32
    }

    #[test]
    fn grouped_bits_reduce_and_telescope() {
        let bits = [1.0, 2.0, 3.0, 4.0];
        let mu: Vec<f32> = bits.iter().map(|&b| mu_for_bits(b)).collect();
        let b = LatentBatch::new(1, 4, mu, vec![1.0; 4]).unwrap();
        let per_dim = grouped_rate_bits(&b, 1).unwrap();
        let stats = batch_rate_stats(&b).unwrap();
        for (a, e) in per_dim.iter().zip(stats.per_dim_bits()) {
            assert!((a - e).abs() < 1e-12);
        }
        let whole = grouped_rate_bits(&b, 4).unwrap();
        assert_eq!(whole.len(), 1);
        assert!((whole[0] - per_dim.iter().sum::<f64>()).abs() < 1e-9);

        let pairs = grouped_rate_bits(&b, 2).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!((pairs[0] - 3.0).abs() < 1e-5, "got {}", pairs[0]);
        assert!((pairs[1] - 7.0).abs() < 1e-5, "got {}", pairs[1]);
    }

    #[test]
    fn grouped_bits_need_divisible_dims() {
        let b = LatentBatch::new(1, 3, vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(
            grouped_rate_bits(&b, 2),
            Err(RateStatsError::IndivisibleDimensions { d: 3, m: 2 })
        ));
    }
}
