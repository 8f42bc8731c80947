//! Post-quantization token packing: m fine tokens with per-token
//! codebook size `base` combine into one aggregated token in base-`base`
//! positional notation, least-significant digit first. Packing never
//! touches reconstruction; it is a pure relabeling of index tuples.

use thiserror::Error;

use crate::tensor_io::{TensorIoError, TokenGrid};

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("tokens per vector {g} not divisible by group size {m}")]
    IndivisibleTokens { g: usize, m: usize },
    #[error("token base mismatch: grid has k={got}, spec expects {expected}")]
    BaseMismatch { got: u32, expected: u32 },
    #[error("base {base} must be >= 2 and base^m must fit in u32")]
    BadBase { base: u32, m: usize },
    #[error(transparent)]
    Grid(#[from] TensorIoError),
}

/// Packing layout: `m` digits in base `base` form one token in
/// `0..base^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackSpec {
    m: usize,
    base: u32,
    packed_k: u32,
}

impl PackSpec {
    pub fn new(base: u32, m: usize) -> Result<Self, GroupingError> {
        if base < 2 || m == 0 {
            return Err(GroupingError::BadBase { base, m });
        }
        let mut packed: u32 = 1;
        for _ in 0..m {
            packed = packed
                .checked_mul(base)
                .ok_or(GroupingError::BadBase { base, m })?;
        }
        Ok(PackSpec { m, base, packed_k: packed })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn packed_k(&self) -> u32 {
        self.packed_k
    }
}

/// Aggregate groups of `m` fine tokens into single packed tokens.
/// Group `(t_0, .., t_{m-1})` maps to `sum_l t_l * base^l`.
pub fn pack(tokens: &TokenGrid, spec: &PackSpec) -> Result<TokenGrid, GroupingError> {
    if tokens.k_per_token() != spec.base {
        return Err(GroupingError::BaseMismatch {
            got: tokens.k_per_token(),
            expected: spec.base,
        });
    }
    if tokens.g() % spec.m != 0 {
        return Err(GroupingError::IndivisibleTokens { g: tokens.g(), m: spec.m });
    }
    let groups = tokens.g() / spec.m;
    let mut packed = Vec::with_capacity(tokens.n() * groups);
    for i in 0..tokens.n() {
        for g in 0..groups {
            let mut acc: u32 = 0;
            let mut place: u32 = 1;
            for l in 0..spec.m {
                acc += tokens.at(i, g * spec.m + l) * place;
                if l + 1 < spec.m {
                    place *= spec.base;
                }
            }
            packed.push(acc);
        }
    }
    Ok(TokenGrid::new(tokens.n(), groups, spec.packed_k, packed)?)
}

/// Inverse of [`pack`]: extract digits least-significant first.
pub fn unpack(tokens: &TokenGrid, spec: &PackSpec) -> Result<TokenGrid, GroupingError> {
    if tokens.k_per_token() != spec.packed_k {
        return Err(GroupingError::BaseMismatch {
            got: tokens.k_per_token(),
            expected: spec.packed_k,
        });
    }
    let g_out = tokens.g() * spec.m;
    let mut fine = Vec::with_capacity(tokens.n() * g_out);
    for i in 0..tokens.n() {
        for g in 0..tokens.g() {
            let mut rest = tokens.at(i, g);
            for _ in 0..spec.m {
                fine.push(rest % spec.base);
                rest /= spec.base;
            }
        }
    }
    Ok(TokenGrid::new(tokens.n(), g_out, spec.base, fine)?)
}
