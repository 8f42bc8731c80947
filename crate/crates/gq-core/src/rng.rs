//! Counter-based pseudorandom streams.
//!
//! Every random quantity in this crate is a pure function of
//! `(seed, index)`: the generator carries no mutable state, so any
//! sub-range of a stream can be materialized independently and the
//! output is identical under any degree of parallelism. Draws come
//! from the SplitMix64 output function; normal variates go through the
//! inverse CDF so that a single uniform maps to a single variate.

use crate::normal;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed, stateless random stream addressed by counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: seed }
    }

    /// Raw 64-bit draw at position `index`.
    #[inline]
    pub fn bits(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, index: u64) -> f64 {
        // 53 mantissa bits, offset by half an ULP so 0.0 and 1.0 are
        // unreachable (the inverse normal CDF needs the open interval).
        (self.bits(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
            + (0.5 / (1u64 << 53) as f64)
    }

    /// Standard normal draw at position `index`.
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        normal::inv_cdf(self.uniform(index))
    }

    /// Derive an independent child stream. Children of distinct
    /// indices never collide with each other or with the parent.
    #[inline]
    pub fn substream(&self, index: u64) -> CounterRng {
        CounterRng { key: self.bits(index) ^ 0xA5A5_A5A5_5A5A_5A5A }
    }
}
