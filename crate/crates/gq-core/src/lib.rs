//! Gaussian-codebook quantization toolkit.
//!
//! Turns Gaussian posterior parameters (per-dimension mean/stddev
//! tensors) into discrete tokens against a fixed standard-normal
//! codebook, and provides the analysis machinery around that
//! conversion: bits-back rate statistics and codebook-size selection,
//! tail-bound evaluation with Monte Carlo verification, the
//! target-divergence-constraint (TDC) controller, token grouping, and
//! the reverse-channel-coding / partition-quantizer baselines.

pub mod baselines;
pub mod bounds;
pub mod codebook;
pub mod grouping;
pub mod meankl;
pub mod normal;
pub mod quantizer;
pub mod rate_stats;
pub mod rng;
pub mod tdc;
pub mod tensor_io;

pub use codebook::Codebook;
pub use quantizer::{QuantResult, QuantizerConfig};
pub use rate_stats::RateStats;
pub use tdc::TdcState;
pub use tensor_io::{BoundReport, BoundRow, LatentBatch, TokenGrid};
