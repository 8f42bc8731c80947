//! Deterministic Gaussian codebooks: generation, persistence, and the
//! sorted auxiliary view that enables bisect search at m = 1.
//!
//! Entries are standard-normal draws from a counter-based stream keyed
//! on the seed, so any sub-range can be materialized independently and
//! regeneration from `(k, m, seed)` is exact on one implementation.
//! Cross-implementation interchange goes through the file format, not
//! the seed.
//!
//! File layout:
//!   "GQCB" | u8 version=1 | u32 k | u32 m | u64 seed | k*m f32 values

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::CounterRng;
use crate::tensor_io::{
    expect_eof, read_f32_vec, read_header, read_u32, read_u64, write_f32_slice, write_header,
    TensorIoError,
};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"GQCB";

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("codebook size and dimension must be at least 1 (k={k}, m={m})")]
    ZeroSize { k: usize, m: usize },
    #[error(transparent)]
    Format(#[from] TensorIoError),
}

/// K rows of m-dimensional standard-normal samples. Immutable after
/// creation; shared read access from any number of threads is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    m: usize,
    seed: u64,
    values: Vec<f32>,
    /// Present iff m == 1: permutation putting `values` in ascending
    /// order, ties ordered by original index.
    sorted_perm: Option<Vec<u32>>,
}

impl Codebook {
    /// Draw a fresh codebook of `k` entries of dimension `m` from the
    /// stream keyed on `seed`. Entry `j` component `c` is the draw at
    /// counter `j*m + c`, so `generate` is reproducible and sub-range
    /// materialization would need no preceding draws.
    pub fn generate(k: usize, m: usize, seed: u64) -> Result<Self, CodebookError> {
        if k == 0 || m == 0 {
            return Err(CodebookError::ZeroSize { k, m });
        }
        let rng = CounterRng::new(seed);
        let values: Vec<f32> = (0..k * m).map(|i| rng.normal(i as u64) as f32).collect();
        Ok(Self::from_parts(k, m, seed, values))
    }

    fn from_parts(k: usize, m: usize, seed: u64, values: Vec<f32>) -> Self {
        let sorted_perm = (m == 1).then(|| {
            let mut perm: Vec<u32> = (0..k as u32).collect();
            // Stable order on ties keeps token ids identical between
            // the scan and bisect paths.
            perm.sort_unstable_by(|&a, &b| {
                values[a as usize]
                    .partial_cmp(&values[b as usize])
                    .expect("finite codebook values")
                    .then(a.cmp(&b))
            });
            perm
        });
        Codebook { k, m, seed, values, sorted_perm }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat row-major values (k rows of m components).
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Row `j` as a slice of length m.
    #[inline]
    pub fn row(&self, j: usize) -> &[f32] {
        &self.values[j * self.m..(j + 1) * self.m]
    }

    /// Scalar entry for m = 1 codebooks, widened for arithmetic.
    #[inline]
    pub fn scalar(&self, j: usize) -> f64 {
        debug_assert_eq!(self.m, 1);
        self.values[j] as f64
    }

    /// Ascending-order permutation. Present iff m == 1.
    pub fn sorted_perm(&self) -> Option<&[u32]> {
        self.sorted_perm.as_deref()
    }

    /// True when no two rows are identical (then dequantization is
    /// injective on token ids). Holds with probability 1 for Gaussian
    /// draws, but files are untrusted.
    pub fn rows_distinct(&self) -> bool {
        if let Some(perm) = &self.sorted_perm {
            return perm
                .windows(2)
                .all(|w| self.values[w[0] as usize] != self.values[w[1] as usize]);
        }
        let mut rows: Vec<&[f32]> = (0..self.k).map(|j| self.row(j)).collect();
        rows.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite codebook values"));
        rows.windows(2).all(|w| w[0] != w[1])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CodebookError> {
        let mut w = BufWriter::new(File::create(path).map_err(TensorIoError::Io)?);
        write_header(&mut w, CODEBOOK_MAGIC).map_err(TensorIoError::Io)?;
        w.write_all(&(self.k as u32).to_le_bytes()).map_err(TensorIoError::Io)?;
        w.write_all(&(self.m as u32).to_le_bytes()).map_err(TensorIoError::Io)?;
        w.write_all(&self.seed.to_le_bytes()).map_err(TensorIoError::Io)?;
        write_f32_slice(&mut w, &self.values).map_err(TensorIoError::Io)?;
        w.flush().map_err(TensorIoError::Io)?;
        Ok(())
    }

    /// Load a codebook file, rebuilding the sorted view when m == 1.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CodebookError> {
        let mut r = BufReader::new(File::open(path).map_err(TensorIoError::Io)?);
        read_header(&mut r, CODEBOOK_MAGIC)?;
        let k = read_u32(&mut r)? as usize;
        let m = read_u32(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        if k == 0 || m == 0 {
            return Err(CodebookError::ZeroSize { k, m });
        }
        let len = k
            .checked_mul(m)
            .ok_or(TensorIoError::TruncatedFile { needed: usize::MAX })?;
        let values = read_f32_vec(&mut r, len)?;
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CodebookError::Format(TensorIoError::NonFinite {
                    row: idx / m,
                    col: idx % m,
                }));
            }
        }
        expect_eof(&mut r)?;
        Ok(Self::from_parts(k, m, seed, values))
    }
}
