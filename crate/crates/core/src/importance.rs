//! Per-sample importance, sampling distributions and importance balancing.
//!
//! A sample's importance is an upper bound `L_i` on its gradient norm.
//! Sampling proportionally to `L_i` and scaling each step by `1/(n p_i)`
//! keeps the stochastic gradient unbiased while lowering its variance.
//! When the data is split into contiguous per-worker partitions, each worker
//! normalizes over its own slice, so the head-tail rearrangement in
//! [`importance_balance`] is used to even out the per-partition sums.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::data::{Partition, SparseDataset};
use crate::objectives::{Objective, ObjectiveError};
use crate::rng;

/// Default threshold of the `rho <= zeta` balancing gate.
pub const DEFAULT_ZETA: f64 = 5e-4;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("importance vector is empty")]
    Empty,
    #[error("importance of sample {index} must be positive and finite, got {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("ordering is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("partitions do not tile 0..{0}")]
    BadPartitions(usize),
    #[error("all sample gradients are zero, the optimal distribution is undefined")]
    ZeroGradients,
    #[error("unknown balance mode '{0}' (expected auto, always or never)")]
    UnknownBalanceMode(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

pub type Result<T> = std::result::Result<T, ImportanceError>;

fn check_positive(lipschitz: &[f64]) -> Result<()> {
    if lipschitz.is_empty() {
        return Err(ImportanceError::Empty);
    }
    match lipschitz.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
        Some(index) => Err(ImportanceError::NonPositive { index, value: lipschitz[index] }),
        None => Ok(()),
    }
}

/// `p_i = L_i / sum_j L_j`.
pub fn sampling_distribution(lipschitz: &[f64]) -> Result<Vec<f64>> {
    check_positive(lipschitz)?;
    if lipschitz.iter().all(|&l| l == lipschitz[0]) {
        return Ok(vec![1.0 / lipschitz.len() as f64; lipschitz.len()]);
    }
    let total: f64 = lipschitz.iter().sum();
    Ok(lipschitz.iter().map(|l| l / total).collect())
}

/// `(sum L)^2 / sum L^2`, which lies in `[1, n]`. Small values relative to
/// `n` mean importance is concentrated on few samples.
pub fn psi(lipschitz: &[f64]) -> Result<f64> {
    check_positive(lipschitz)?;
    if lipschitz.iter().all(|&l| l == lipschitz[0]) {
        return Ok(lipschitz.len() as f64);
    }
    let sum: f64 = lipschitz.iter().sum();
    let sum_sq: f64 = lipschitz.iter().map(|l| l * l).sum();
    Ok(sum * sum / sum_sq)
}

/// Variance of `L` after normalizing it to mean one.
pub fn rho(lipschitz: &[f64]) -> Result<f64> {
    check_positive(lipschitz)?;
    if lipschitz.iter().all(|&l| l == lipschitz[0]) {
        return Ok(0.0);
    }
    let n = lipschitz.len() as f64;
    let mean = lipschitz.iter().sum::<f64>() / n;
    Ok(lipschitz.iter().map(|l| (l / mean - 1.0).powi(2)).sum::<f64>() / n)
}

/// Importance diagnostics of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceProfile {
    lipschitz: Vec<f64>,
    probabilities: Vec<f64>,
    psi: f64,
    rho: f64,
    mean: f64,
}

impl ImportanceProfile {
    pub fn new(lipschitz: Vec<f64>) -> Result<Self> {
        let probabilities = sampling_distribution(&lipschitz)?;
        let psi = psi(&lipschitz)?;
        let rho = rho(&lipschitz)?;
        let mean = lipschitz.iter().sum::<f64>() / lipschitz.len() as f64;
        Ok(ImportanceProfile { lipschitz, probabilities, psi, rho, mean })
    }

    pub fn from_objective(obj: &Objective, ds: &SparseDataset) -> Result<Self> {
        Self::new(obj.lipschitz_bounds(ds)?)
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// `psi / n`, in `(0, 1]`.
    pub fn psi_over_n(&self) -> f64 {
        self.psi / self.lipschitz.len() as f64
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.lipschitz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lipschitz.is_empty()
    }
}

/// Head-tail rearrangement: sort ascending by `L` (ties by index), then emit
/// the smallest, the largest, the second smallest, the second largest, ...
pub fn importance_balance(lipschitz: &[f64]) -> Vec<usize> {
    let n = lipschitz.len();
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| lipschitz[a].total_cmp(&lipschitz[b]));
    let mut out = Vec::with_capacity(n);
    for i in 0..n / 2 {
        out.push(sorted[i]);
        out.push(sorted[n - 1 - i]);
    }
    if n % 2 == 1 {
        out.push(sorted[n / 2]);
    }
    out
}

/// Uniform random permutation of `0..n` from the ordering stream of `seed`.
pub fn random_shuffle(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::ORDERING_STREAM));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceMode {
    /// Balance when `rho <= zeta`, shuffle otherwise.
    Auto,
    Always,
    Never,
}

impl FromStr for BalanceMode {
    type Err = ImportanceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(BalanceMode::Auto),
            "always" => Ok(BalanceMode::Always),
            "never" => Ok(BalanceMode::Never),
            other => Err(ImportanceError::UnknownBalanceMode(other.to_string())),
        }
    }
}

impl fmt::Display for BalanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BalanceMode::Auto => "auto",
            BalanceMode::Always => "always",
            BalanceMode::Never => "never",
        })
    }
}

/// Dataset ordering chosen before partitioning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOrdering {
    pub order: Vec<usize>,
    pub balanced: bool,
    /// Whether `rho <= zeta` held, independent of the mode.
    pub gate_fired: bool,
}

/// Applies the balancing gate: importance balancing when the mode says so
/// (`Auto` uses `rho <= zeta`), otherwise a seeded random shuffle.
pub fn choose_ordering(lipschitz: &[f64], mode: BalanceMode, zeta: f64, seed: u64) -> Result<SampleOrdering> {
    let gate_fired = rho(lipschitz)? <= zeta;
    let balanced = match mode {
        BalanceMode::Auto => gate_fired,
        BalanceMode::Always => true,
        BalanceMode::Never => false,
    };
    let order = if balanced { importance_balance(lipschitz) } else { random_shuffle(lipschitz.len(), seed) };
    Ok(SampleOrdering { order, balanced, gate_fired })
}

pub fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(ImportanceError::NotPermutation(n));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(ImportanceError::NotPermutation(n));
        }
    }
    Ok(())
}

/// Importance sum of every partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionImportance {
    pub phi: Vec<f64>,
}

impl PartitionImportance {
    /// `max phi - min phi`.
    pub fn spread(&self) -> f64 {
        let max = self.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

pub fn partition_importance_sums(
    lipschitz: &[f64],
    partitions: &[Partition],
    order: &[usize],
) -> Result<PartitionImportance> {
    let n = lipschitz.len();
    check_permutation(order, n)?;
    let mut next = 0;
    for p in partitions {
        if p.lo != next || p.hi < p.lo {
            return Err(ImportanceError::BadPartitions(n));
        }
        next = p.hi;
    }
    if next != n {
        return Err(ImportanceError::BadPartitions(n));
    }
    Ok(PartitionImportance {
        phi: partitions.iter().map(|p| p.slice(order).iter().map(|&i| lipschitz[i]).sum()).collect(),
    })
}

/// Walker/Vose alias table for O(1) draws from a discrete distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasSampler {
    probability: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasSampler {
    pub fn new(distribution: &[f64]) -> Result<Self> {
        let n = distribution.len();
        if n == 0 {
            return Err(ImportanceError::InvalidDistribution("empty".into()));
        }
        if let Some(p) = distribution.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(ImportanceError::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        let total: f64 = distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ImportanceError::InvalidDistribution(format!("sums to {total}")));
        }

        let mut scaled: Vec<f64> = distribution.iter().map(|p| p * n as f64).collect();
        let mut probability = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            probability[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers on either list are 1 up to rounding.
        for i in small.into_iter().chain(large) {
            probability[i] = 1.0;
            alias[i] = i;
        }
        Ok(AliasSampler { probability, alias })
    }

    pub fn len(&self) -> usize {
        self.probability.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probability.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let column = rng.gen_range(0..self.probability.len());
        if rng.gen::<f64>() < self.probability[column] {
            column
        } else {
            self.alias[column]
        }
    }

    /// Distribution encoded by the tables.
    pub fn implied_distribution(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mass: Vec<f64> = self.probability.clone();
        for (column, &a) in self.alias.iter().enumerate() {
            if a != column {
                mass[a] += 1.0 - self.probability[column];
            }
        }
        mass.iter().map(|m| m / n).collect()
    }
}

/// `len` i.i.d. draws from `sampler` using a generator seeded with `seed`.
pub fn generate_sequence(sampler: &AliasSampler, len: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::Rng::seed_from_u64(seed);
    generate_sequence_with(sampler, len, &mut rng)
}

pub fn generate_sequence_with<R: Rng + ?Sized>(sampler: &AliasSampler, len: usize, rng: &mut R) -> Vec<usize> {
    (0..len).map(|_| sampler.sample(rng)).collect()
}

/// Gradient-norm-proportional distribution at `w`, which minimizes the
/// variance of the reweighted stochastic gradient at that point. Too costly
/// for training; used as a reference.
pub fn optimal_distribution_oracle(ds: &SparseDataset, obj: &Objective, w: &[f64]) -> Result<Vec<f64>> {
    let norms = (0..ds.len()).map(|i| Ok(obj.grad(ds, i, w)?.norm())).collect::<Result<Vec<f64>>>()?;
    let total: f64 = norms.iter().sum();
    if total <= 0.0 {
        return Err(ImportanceError::ZeroGradients);
    }
    Ok(norms.iter().map(|g| g / total).collect())
}
