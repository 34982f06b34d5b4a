//! Sparse binary-classification datasets.
//!
//! Samples are stored row-compressed (CSR): one offsets array into packed
//! feature indices and values. Labels are always `-1.0` or `+1.0`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("dimension override {dim} is smaller than required dimension {required}")]
    DimensionTooSmall { dim: usize, required: usize },
    #[error("conflict degree needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("num_pairs must be at least 1")]
    NoPairs,
    #[error("cannot split {n} samples across {num_threads} partitions")]
    InvalidPartition { n: usize, num_threads: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Immutable sparse dataset with `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    dim: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

impl SparseDataset {
    /// Builds a dataset from per-row `(feature, value)` lists.
    ///
    /// `dim` defaults to one past the largest feature index.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, labels: Vec<f64>, dim: Option<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(DataError::InvalidRow {
                row: rows.len().min(labels.len()),
                message: format!("{} rows but {} labels", rows.len(), labels.len()),
            });
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Self::from_csr(offsets, indices, values, labels, dim)
    }

    /// Builds a dataset from raw CSR arrays, checking every invariant.
    pub fn from_csr(
        offsets: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
        labels: Vec<f64>,
        dim: Option<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if offsets.len() != n + 1 || offsets[0] != 0 || *offsets.last().unwrap() != indices.len() {
            return Err(DataError::InvalidRow { row: 0, message: "malformed row offsets".into() });
        }
        if indices.len() != values.len() {
            return Err(DataError::InvalidRow { row: 0, message: "index/value length mismatch".into() });
        }
        let mut required = 0usize;
        for row in 0..n {
            let (lo, hi) = (offsets[row], offsets[row + 1]);
            if hi <= lo {
                return Err(DataError::InvalidRow { row, message: "row has no features".into() });
            }
            let idx = &indices[lo..hi];
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DataError::InvalidRow { row, message: "feature indices not strictly increasing".into() });
            }
            if let Some(v) = values[lo..hi].iter().find(|v| !v.is_finite() || **v == 0.0) {
                return Err(DataError::InvalidRow { row, message: format!("invalid feature value {v}") });
            }
            required = required.max(idx[idx.len() - 1] as usize + 1);
            let y = labels[row];
            if y != 1.0 && y != -1.0 {
                return Err(DataError::InvalidRow { row, message: format!("label {y} is not -1 or +1") });
            }
        }
        let dim = match dim {
            Some(d) if d < required => return Err(DataError::DimensionTooSmall { dim: d, required }),
            Some(d) => d,
            None => required,
        };
        Ok(SparseDataset { dim, offsets, indices, values, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Feature indices and values of sample `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Mean support size divided by the dimension.
    pub fn gradient_sparsity(&self) -> f64 {
        self.nnz() as f64 / self.len() as f64 / self.dim as f64
    }

    /// Dense copy of row `i`, for tests and small oracles.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j as usize] = v;
        }
        out
    }

    /// Returns a copy with every feature value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SparseDataset {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    let value: f64 = token
        .parse()
        .map_err(|_| DataError::Parse { line, message: format!("invalid label '{token}'") })?;
    if value == 1.0 {
        Ok(1.0)
    } else if value == -1.0 || value == 0.0 {
        Ok(-1.0)
    } else {
        Err(DataError::Parse { line, message: format!("label '{token}' is not one of -1, 0, +1") })
    }
}

/// Parses LibSVM text (`<label> <idx>:<val> ...`, 1-based indices).
///
/// Blank lines and `#` comments are skipped. Explicit zero values are dropped
/// from the stored support but still take part in the ordering check.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<SparseDataset> {
    let mut offsets = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label = parse_label(label_tok, line_no)?;

        let row_start = indices.len();
        let mut prev: Option<u64> = None;
        for tok in tokens {
            let err = |message: String| DataError::Parse { line: line_no, message };
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got '{tok}'")))?;
            let idx: u64 = idx_s.parse().map_err(|_| err(format!("invalid feature index '{idx_s}'")))?;
            if idx == 0 || idx > u32::MAX as u64 + 1 {
                return Err(err(format!("feature index {idx} out of range (indices are 1-based)")));
            }
            let val: f64 = val_s.parse().map_err(|_| err(format!("invalid feature value '{val_s}'")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value '{val_s}'")));
            }
            if let Some(p) = prev {
                if idx <= p {
                    return Err(err(format!("feature index {idx} does not increase (previous {p})")));
                }
            }
            prev = Some(idx);
            if val != 0.0 {
                indices.push((idx - 1) as u32);
                values.push(val);
            }
        }
        if indices.len() == row_start {
            return Err(DataError::Parse { line: line_no, message: "sample has no nonzero features".into() });
        }
        offsets.push(indices.len());
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    SparseDataset::from_csr(offsets, indices, values, labels, dim)
}

pub fn parse_libsvm_str(text: &str, dim: Option<usize>) -> Result<SparseDataset> {
    parse_libsvm(text.as_bytes(), dim)
}

pub fn load_libsvm(path: &Path, dim: Option<usize>) -> Result<SparseDataset> {
    parse_libsvm(BufReader::new(File::open(path)?), dim)
}

/// Writes LibSVM text. Values use the shortest round-trip float form, so
/// re-parsing reproduces the dataset exactly (dimension aside).
pub fn write_libsvm<W: Write>(ds: &SparseDataset, mut out: W) -> io::Result<()> {
    for i in 0..ds.len() {
        out.write_all(if ds.label(i) > 0.0 { b"+1" } else { b"-1" })?;
        let (idx, val) = ds.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            write!(out, " {}:{}", j as u64 + 1, v)?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_libsvm_string(ds: &SparseDataset) -> String {
    let mut buf = Vec::new();
    write_libsvm(ds, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("LibSVM output is ASCII")
}

const CACHE_MAGIC: &[u8; 8] = b"ISASGDDS";
pub const CACHE_VERSION: u32 = 1;

/// Binary cache layout (little-endian):
/// magic[8], version u32, n u64, d u64, offsets (n+1) x u64,
/// labels n x i8, then nnz packed (u32 index, f64 value) pairs.
pub fn write_cache<W: Write>(ds: &SparseDataset, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&(ds.len() as u64).to_le_bytes())?;
    out.write_all(&(ds.dim as u64).to_le_bytes())?;
    for &o in &ds.offsets {
        out.write_all(&(o as u64).to_le_bytes())?;
    }
    for &y in &ds.labels {
        out.write_all(&[(y as i8) as u8])?;
    }
    for (&j, &v) in ds.indices.iter().zip(&ds.values) {
        out.write_all(&j.to_le_bytes())?;
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_cache<R: Read>(mut input: R) -> Result<SparseDataset> {
    fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf)?;
        Ok(buf)
    }
    let magic: [u8; 8] = take(&mut input)?;
    if &magic != CACHE_MAGIC {
        return Err(DataError::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut input)?);
    if version != CACHE_VERSION {
        return Err(DataError::Cache(format!("stale cache version {version}, expected {CACHE_VERSION}")));
    }
    let n = u64::from_le_bytes(take(&mut input)?) as usize;
    let dim = u64::from_le_bytes(take(&mut input)?) as usize;
    let mut input = BufReader::new(input);
    let offsets = (0..=n)
        .map(|_| Ok(u64::from_le_bytes(take(&mut input)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..n)
        .map(|_| Ok(take::<1, _>(&mut input)?[0] as i8 as f64))
        .collect::<Result<Vec<_>>>()?;
    let nnz = *offsets.last().unwrap_or(&0);
    let mut indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        indices.push(u32::from_le_bytes(take(&mut input)?));
        values.push(f64::from_le_bytes(take(&mut input)?));
    }
    SparseDataset::from_csr(offsets, indices, values, labels, Some(dim))
}

/// Euclidean norm of every row.
pub fn row_norms(ds: &SparseDataset) -> Vec<f64> {
    (0..ds.len())
        .map(|i| ds.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Merge-scan test for a shared feature between two sorted index lists.
pub fn supports_intersect(a: &[u32], b: &[u32]) -> bool {
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Estimates the average degree of the conflict graph, where two samples
/// are adjacent when their supports share a feature.
///
/// Samples `num_pairs` ordered pairs `(i, j)`, `i != j`, uniformly and scales
/// the hit fraction by `n - 1`. When `num_pairs >= n(n-1)` every ordered pair
/// is enumerated once instead, which gives the exact average degree.
pub fn estimate_conflict_degree(ds: &SparseDataset, num_pairs: u64, seed: u64) -> Result<f64> {
    let n = ds.len();
    if n < 2 {
        return Err(DataError::TooFewSamples(n));
    }
    if num_pairs == 0 {
        return Err(DataError::NoPairs);
    }
    let all_pairs = (n as u64) * (n as u64 - 1);
    if num_pairs >= all_pairs {
        return Ok(exhaustive_conflict_degree(ds));
    }
    let mut rng = rng::stream(seed, rng::CONFLICT_STREAM);
    let mut hits = 0u64;
    for _ in 0..num_pairs {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if supports_intersect(ds.row(i).0, ds.row(j).0) {
            hits += 1;
        }
    }
    Ok(hits as f64 / num_pairs as f64 * (n - 1) as f64)
}

fn exhaustive_conflict_degree(ds: &SparseDataset) -> f64 {
    let n = ds.len();
    let mut hits = 0u64;
    for i in 0..n {
        for j in 0..n {
            if i != j && supports_intersect(ds.row(i).0, ds.row(j).0) {
                hits += 1;
            }
        }
    }
    hits as f64 / n as f64
}

/// Half-open slice `[lo, hi)` of a reordered index array owned by one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    pub thread_id: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn slice<'a, T>(&self, order: &'a [T]) -> &'a [T] {
        &order[self.lo..self.hi]
    }
}

/// Splits `order` into `num_threads` contiguous ranges
/// `[n*t/num_threads, n*(t+1)/num_threads)`.
pub fn partition_contiguous<T>(order: &[T], num_threads: usize) -> Result<Vec<Partition>> {
    let n = order.len();
    if num_threads == 0 || num_threads > n {
        return Err(DataError::InvalidPartition { n, num_threads });
    }
    let bound = |t: usize| ((n as u128 * t as u128) / num_threads as u128) as usize;
    Ok((0..num_threads)
        .map(|t| Partition { thread_id: t, lo: bound(t), hi: bound(t + 1) })
        .collect())
}
