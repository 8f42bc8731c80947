//! Bit-exact binary formats for latent batches and token grids, plus
//! CSV emission for analysis output.
//!
//! All integers and floats are little-endian on disk regardless of
//! host. Values are stored as f32 (latents are f32 in practice); all
//! in-memory arithmetic elsewhere in the crate widens to f64.
//!
//! Layouts:
//!   latents  "GQLT" | u8 version=1 | u32 n | u32 d | n*d f32 mu | n*d f32 sigma
//!   tokens   "GQTK" | u8 version=1 | u32 n | u32 g | u32 k_per_token | n*g u32
//!
//! (The codebook format "GQCB" lives in [`crate::codebook`].)

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const LATENT_MAGIC: &[u8; 4] = b"GQLT";
pub const TOKEN_MAGIC: &[u8; 4] = b"GQTK";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    BadVersion(u8),
    #[error("truncated file: needed {needed} more bytes")]
    TruncatedFile { needed: usize },
    #[error("trailing data after payload")]
    TrailingData,
    #[error("sigma must be > 0; sigma[{row}][{col}] = {value}")]
    NonPositiveSigma { row: usize, col: usize, value: f32 },
    #[error("non-finite value at [{row}][{col}]")]
    NonFinite { row: usize, col: usize },
    #[error("token index {value} out of range for k={k} at [{row}][{col}]")]
    TokenOutOfRange { row: usize, col: usize, value: u32, k: u32 },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("ragged columns: column {name} has {len} rows, expected {expected}")]
    RaggedColumns { name: String, len: usize, expected: usize },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Per-dimension Gaussian posterior parameters for a batch of latent
/// vectors: row-major `n x d` arrays of means and standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    n: usize,
    d: usize,
    mu: Vec<f32>,
    sigma: Vec<f32>,
}

impl LatentBatch {
    /// Build a validated batch. Every sigma must be strictly positive
    /// and every entry finite.
    pub fn new(n: usize, d: usize, mu: Vec<f32>, sigma: Vec<f32>) -> Result<Self, TensorIoError> {
        let expected = n
            .checked_mul(d)
            .ok_or(TensorIoError::ShapeMismatch { expected: usize::MAX, got: 0 })?;
        if mu.len() != expected {
            return Err(TensorIoError::ShapeMismatch { expected, got: mu.len() });
        }
        if sigma.len() != expected {
            return Err(TensorIoError::ShapeMismatch { expected, got: sigma.len() });
        }
        for (idx, &m) in mu.iter().enumerate() {
            if !m.is_finite() {
                return Err(TensorIoError::NonFinite { row: idx / d.max(1), col: idx % d.max(1) });
            }
        }
        for (idx, &s) in sigma.iter().enumerate() {
            if !s.is_finite() {
                return Err(TensorIoError::NonFinite { row: idx / d.max(1), col: idx % d.max(1) });
            }
            if s <= 0.0 {
                return Err(TensorIoError::NonPositiveSigma {
                    row: idx / d.max(1),
                    col: idx % d.max(1),
                    value: s,
                });
            }
        }
        Ok(LatentBatch { n, d, mu, sigma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Flat row-major means.
    pub fn mu(&self) -> &[f32] {
        &self.mu
    }

    /// Flat row-major standard deviations.
    pub fn sigma(&self) -> &[f32] {
        &self.sigma
    }

    #[inline]
    pub fn mu_at(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.d + j] as f64
    }

    #[inline]
    pub fn sigma_at(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.d + j] as f64
    }
}

/// Integer token indices produced by quantization: `n` vectors of `g`
/// tokens each, every index drawn from `0..k_per_token`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    n: usize,
    g: usize,
    k_per_token: u32,
    indices: Vec<u32>,
}

impl TokenGrid {
    pub fn new(
        n: usize,
        g: usize,
        k_per_token: u32,
        indices: Vec<u32>,
    ) -> Result<Self, TensorIoError> {
        let expected = n
            .checked_mul(g)
            .ok_or(TensorIoError::ShapeMismatch { expected: usize::MAX, got: 0 })?;
        if indices.len() != expected {
            return Err(TensorIoError::ShapeMismatch { expected, got: indices.len() });
        }
        for (idx, &t) in indices.iter().enumerate() {
            if t >= k_per_token {
                return Err(TensorIoError::TokenOutOfRange {
                    row: idx / g.max(1),
                    col: idx % g.max(1),
                    value: t,
                    k: k_per_token,
                });
            }
        }
        Ok(TokenGrid { n, g, k_per_token, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Tokens per vector.
    pub fn g(&self) -> usize {
        self.g
    }

    pub fn k_per_token(&self) -> u32 {
        self.k_per_token
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> u32 {
        self.indices[i * self.g + j]
    }
}

/// One row of a tail-bound curve: offset `t` in nats, the analytical
/// upper and lower bounds, an empirical (or exact worst-case)
/// probability, and its confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub t: f64,
    pub upper: f64,
    pub lower: f64,
    pub empirical: f64,
    pub ci_halfwidth: f64,
}

/// Rows of a bound curve, sorted by `t` ascending, every probability
/// in [0, 1].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundReport {
    rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn new(rows: Vec<BoundRow>) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0].t <= w[1].t));
        debug_assert!(rows.iter().all(|r| {
            (0.0..=1.0).contains(&r.upper)
                && (0.0..=1.0).contains(&r.lower)
                && (0.0..=1.0).contains(&r.empirical)
        }));
        BoundReport { rows }
    }

    pub fn rows(&self) -> &[BoundRow] {
        &self.rows
    }

    /// Column view suitable for [`write_csv`].
    pub fn columns(&self) -> Vec<(String, Vec<f64>)> {
        let get = |f: fn(&BoundRow) -> f64| self.rows.iter().map(f).collect::<Vec<_>>();
        vec![
            ("t".to_string(), get(|r| r.t)),
            ("upper".to_string(), get(|r| r.upper)),
            ("lower".to_string(), get(|r| r.lower)),
            ("empirical".to_string(), get(|r| r.empirical)),
            ("ci_halfwidth".to_string(), get(|r| r.ci_halfwidth)),
        ]
    }
}

// ---------------------------------------------------------------------------
// Low-level wire helpers (shared with the codebook format)
// ---------------------------------------------------------------------------

pub(crate) fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<(), TensorIoError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    if &buf != magic {
        return Err(TensorIoError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&buf).into_owned(),
        });
    }
    let mut v = [0u8; 1];
    read_exact(r, &mut v)?;
    if v[0] != FORMAT_VERSION {
        return Err(TensorIoError::BadVersion(v[0]));
    }
    Ok(())
}

pub(crate) fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), TensorIoError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            TensorIoError::TruncatedFile { needed: buf.len() }
        } else {
            TensorIoError::Io(e)
        }
    })
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32, TensorIoError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64, TensorIoError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f32_vec(r: &mut impl Read, len: usize) -> Result<Vec<f32>, TensorIoError> {
    let mut bytes = vec![0u8; len.checked_mul(4).expect("length overflow")];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn read_u32_vec(r: &mut impl Read, len: usize) -> Result<Vec<u32>, TensorIoError> {
    let mut bytes = vec![0u8; len.checked_mul(4).expect("length overflow")];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn expect_eof(r: &mut impl Read) -> Result<(), TensorIoError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(TensorIoError::TrailingData),
    }
}

pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 4]) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&[FORMAT_VERSION])
}

pub(crate) fn write_f32_slice(w: &mut impl Write, xs: &[f32]) -> io::Result<()> {
    for &x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Latent batch files
// ---------------------------------------------------------------------------

pub fn read_latent_batch(path: impl AsRef<Path>) -> Result<LatentBatch, TensorIoError> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r, LATENT_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    let len = n.checked_mul(d).ok_or(TensorIoError::TruncatedFile { needed: usize::MAX })?;
    let mu = read_f32_vec(&mut r, len)?;
    let sigma = read_f32_vec(&mut r, len)?;
    expect_eof(&mut r)?;
    LatentBatch::new(n, d, mu, sigma)
}

pub fn write_latent_batch(
    batch: &LatentBatch,
    path: impl AsRef<Path>,
) -> Result<(), TensorIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, LATENT_MAGIC)?;
    w.write_all(&(batch.n as u32).to_le_bytes())?;
    w.write_all(&(batch.d as u32).to_le_bytes())?;
    write_f32_slice(&mut w, &batch.mu)?;
    write_f32_slice(&mut w, &batch.sigma)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Token grid files
// ---------------------------------------------------------------------------

pub fn read_token_grid(path: impl AsRef<Path>) -> Result<TokenGrid, TensorIoError> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r, TOKEN_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let g = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)?;
    let len = n.checked_mul(g).ok_or(TensorIoError::TruncatedFile { needed: usize::MAX })?;
    let indices = read_u32_vec(&mut r, len)?;
    expect_eof(&mut r)?;
    TokenGrid::new(n, g, k, indices)
}

pub fn write_token_grid(grid: &TokenGrid, path: impl AsRef<Path>) -> Result<(), TensorIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, TOKEN_MAGIC)?;
    w.write_all(&(grid.n as u32).to_le_bytes())?;
    w.write_all(&(grid.g as u32).to_le_bytes())?;
    w.write_all(&grid.k_per_token.to_le_bytes())?;
    for &t in &grid.indices {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Render `x` with up to 9 significant digits, printf `%g` style:
/// fixed notation for moderate exponents, scientific otherwise, and
/// trailing zeros trimmed either way.
pub fn format_sig(x: f64) -> String {
    const SIG: usize = 9;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIG - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= SIG as i32 {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    // Plain decimal: SIG significant digits means SIG-1-exp fractional digits.
    let decimals = (SIG as i32 - 1 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn csv_field(name: &str) -> String {
    if name.contains(',') || name.contains('"') || name.contains('\n') {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

/// Write named real-valued columns as CSV with a header row. All
/// columns must share one length.
pub fn write_csv<S: AsRef<str>>(
    columns: &[(S, Vec<f64>)],
    path: impl AsRef<Path>,
) -> Result<(), TensorIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(columns, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Same as [`write_csv`] but to any writer.
pub fn write_csv_to<S: AsRef<str>>(
    columns: &[(S, Vec<f64>)],
    w: &mut impl Write,
) -> Result<(), TensorIoError> {
    let rows = columns.first().map_or(0, |(_, v)| v.len());
    for (name, vals) in columns {
        if vals.len() != rows {
            return Err(TensorIoError::RaggedColumns {
                name: name.as_ref().to_string(),
                len: vals.len(),
                expected: rows,
            });
        }
    }
    let header: Vec<String> = columns.iter().map(|(n, _)| csv_field(n.as_ref())).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|(_, v)| format_sig(v[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
