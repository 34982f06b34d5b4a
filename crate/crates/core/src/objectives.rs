//! Per-sample losses and sparse gradients for linear binary classifiers.
//!
//! The regularizer of sample `i` is restricted to the support of `x_i`, both
//! in the loss and in the gradient, so a stochastic update never touches a
//! coordinate outside the sample's features. `full_gradient` is defined as the
//! plain mean of these per-sample gradients.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{row_norms, SparseDataset};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("regularization factor must be finite and non-negative, got {0}")]
    InvalidEta(f64),
    #[error("squared hinge needs a positive regularization factor, got {0}")]
    NonPositiveEta(f64),
    #[error("sample index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("weight vector has length {got}, dataset dimension is {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("unknown objective '{0}' (expected squared_hinge_l2 or logistic_l1)")]
    UnknownFamily(String),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

/// Read access to a weight vector, implemented for plain slices and for the
/// lock-free shared model.
pub trait Weights {
    fn weight(&self, j: usize) -> f64;
    fn dim(&self) -> usize;
}

impl Weights for [f64] {
    #[inline]
    fn weight(&self, j: usize) -> f64 {
        self[j]
    }

    fn dim(&self) -> usize {
        self.len()
    }
}

impl Weights for Vec<f64> {
    #[inline]
    fn weight(&self, j: usize) -> f64 {
        self[j]
    }

    fn dim(&self) -> usize {
        self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `max(0, 1 - y w'x)^2 + (eta/2) ||w_S||^2`
    SquaredHingeL2,
    /// `log(1 + exp(-y w'x)) + eta ||w_S||_1`
    LogisticL1,
}

impl FromStr for Family {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_hinge_l2" => Ok(Family::SquaredHingeL2),
            "logistic_l1" => Ok(Family::LogisticL1),
            other => Err(ObjectiveError::UnknownFamily(other.to_string())),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::SquaredHingeL2 => "squared_hinge_l2",
            Family::LogisticL1 => "logistic_l1",
        })
    }
}

/// Sparse gradient over the support of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseGradient {
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&j, &g) in self.indices.iter().zip(&self.values) {
            out[j as usize] = g;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    family: Family,
    eta: f64,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Objective {
    pub fn new(family: Family, eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(ObjectiveError::InvalidEta(eta));
        }
        if family == Family::SquaredHingeL2 && eta <= 0.0 {
            return Err(ObjectiveError::NonPositiveEta(eta));
        }
        Ok(Objective { family, eta })
    }

    pub fn squared_hinge(eta: f64) -> Result<Self> {
        Self::new(Family::SquaredHingeL2, eta)
    }

    pub fn logistic(eta: f64) -> Result<Self> {
        Self::new(Family::LogisticL1, eta)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn check<W: Weights + ?Sized>(&self, ds: &SparseDataset, i: usize, w: &W) -> Result<()> {
        if i >= ds.len() {
            return Err(ObjectiveError::IndexOutOfRange { index: i, n: ds.len() });
        }
        if w.dim() != ds.dim() {
            return Err(ObjectiveError::DimensionMismatch { got: w.dim(), expected: ds.dim() });
        }
        Ok(())
    }

    /// Derivative of the data term with respect to `w'x`.
    #[inline]
    fn data_slope(&self, y: f64, dot: f64) -> f64 {
        let margin = y * dot;
        match self.family {
            Family::SquaredHingeL2 => -2.0 * (1.0 - margin).max(0.0) * y,
            Family::LogisticL1 => -y / (1.0 + margin.exp()),
        }
    }

    #[inline]
    fn data_loss(&self, margin: f64) -> f64 {
        match self.family {
            Family::SquaredHingeL2 => {
                let h = (1.0 - margin).max(0.0);
                h * h
            }
            Family::LogisticL1 => {
                if margin < 0.0 {
                    -margin + margin.exp().ln_1p()
                } else {
                    (-margin).exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    fn reg_loss(&self, wj: f64) -> f64 {
        match self.family {
            Family::SquaredHingeL2 => 0.5 * self.eta * wj * wj,
            Family::LogisticL1 => self.eta * wj.abs(),
        }
    }

    #[inline]
    fn reg_grad(&self, wj: f64) -> f64 {
        match self.family {
            Family::SquaredHingeL2 => self.eta * wj,
            Family::LogisticL1 => self.eta * sign(wj),
        }
    }

    /// Gradient of sample `i` at `w`, written into `out` aligned with the
    /// sample's feature indices. Each touched weight is read exactly once, so
    /// with a concurrently updated model the gradient is consistent with the
    /// (possibly stale) values that were observed.
    #[inline]
    pub fn gradient_into<W: Weights + ?Sized>(&self, ds: &SparseDataset, i: usize, w: &W, out: &mut Vec<f64>) {
        let (idx, val) = ds.row(i);
        out.clear();
        let mut dot = 0.0;
        for (&j, &x) in idx.iter().zip(val) {
            let wj = w.weight(j as usize);
            out.push(wj);
            dot += wj * x;
        }
        let slope = self.data_slope(ds.label(i), dot);
        for (g, &x) in out.iter_mut().zip(val) {
            let wj = *g;
            *g = slope * x + self.reg_grad(wj);
        }
    }

    pub fn loss<W: Weights + ?Sized>(&self, ds: &SparseDataset, i: usize, w: &W) -> Result<f64> {
        self.check(ds, i, w)?;
        Ok(self.loss_unchecked(ds, i, w))
    }

    #[inline]
    pub(crate) fn loss_unchecked<W: Weights + ?Sized>(&self, ds: &SparseDataset, i: usize, w: &W) -> f64 {
        let (idx, val) = ds.row(i);
        let mut dot = 0.0;
        let mut reg = 0.0;
        for (&j, &x) in idx.iter().zip(val) {
            let wj = w.weight(j as usize);
            dot += wj * x;
            reg += self.reg_loss(wj);
        }
        self.data_loss(ds.label(i) * dot) + reg
    }

    pub fn grad<W: Weights + ?Sized>(&self, ds: &SparseDataset, i: usize, w: &W) -> Result<SparseGradient> {
        self.check(ds, i, w)?;
        let mut values = Vec::with_capacity(ds.row_nnz(i));
        self.gradient_into(ds, i, w, &mut values);
        Ok(SparseGradient { indices: ds.row(i).0.to_vec(), values })
    }

    /// `(1/n) sum_i grad(i, w)`, accumulated in sample order.
    pub fn full_gradient(&self, ds: &SparseDataset, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != ds.dim() {
            return Err(ObjectiveError::DimensionMismatch { got: w.len(), expected: ds.dim() });
        }
        let mut acc = vec![0.0; ds.dim()];
        self.accumulate_gradients(ds, 0..ds.len(), w, &mut acc);
        let n = ds.len() as f64;
        acc.iter_mut().for_each(|g| *g /= n);
        Ok(acc)
    }

    /// Adds the gradients of `samples` into `acc` (no averaging).
    pub(crate) fn accumulate_gradients<W: Weights + ?Sized>(
        &self,
        ds: &SparseDataset,
        samples: std::ops::Range<usize>,
        w: &W,
        acc: &mut [f64],
    ) {
        let mut buf = Vec::new();
        for i in samples {
            self.gradient_into(ds, i, w, &mut buf);
            for (&j, &g) in ds.row(i).0.iter().zip(&buf) {
                acc[j as usize] += g;
            }
        }
    }

    /// Upper bound on the gradient norm of sample `i`, used as its importance.
    ///
    /// Squared hinge: `2 (1 + ||x||/sqrt(eta)) ||x|| + sqrt(eta)`.
    /// Logistic: `||x||^2 / 4 + eta * sqrt(nnz(x))`.
    pub fn lipschitz_bound(&self, ds: &SparseDataset, i: usize) -> Result<f64> {
        if i >= ds.len() {
            return Err(ObjectiveError::IndexOutOfRange { index: i, n: ds.len() });
        }
        let norm = ds.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.bound_from_norm(norm, ds.row_nnz(i))
    }

    fn bound_from_norm(&self, norm: f64, nnz: usize) -> Result<f64> {
        match self.family {
            Family::SquaredHingeL2 => {
                if self.eta <= 0.0 {
                    return Err(ObjectiveError::NonPositiveEta(self.eta));
                }
                let root = self.eta.sqrt();
                Ok(2.0 * (1.0 + norm / root) * norm + root)
            }
            Family::LogisticL1 => Ok(norm * norm / 4.0 + self.eta * (nnz as f64).sqrt()),
        }
    }

    pub fn lipschitz_bounds(&self, ds: &SparseDataset) -> Result<Vec<f64>> {
        row_norms(ds)
            .into_iter()
            .enumerate()
            .map(|(i, norm)| self.bound_from_norm(norm, ds.row_nnz(i)))
            .collect()
    }

    /// Mean per-sample loss.
    pub fn objective_value(&self, ds: &SparseDataset, w: &[f64]) -> f64 {
        (0..ds.len()).map(|i| self.loss_unchecked(ds, i, w)).sum::<f64>() / ds.len() as f64
    }
}
