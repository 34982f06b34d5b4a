use std::sync::atomic::{AtomicU64, Ordering};

use crate::objectives::Weights;

/// How a worker writes `w_j - delta` back to the shared model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Load, subtract, store. Concurrent writers to the same coordinate may
    /// overwrite each other.
    #[default]
    Hogwild,
    /// Compare-and-swap loop; no update is lost.
    CompareExchange,
}

/// Dense weight vector whose coordinates are independently word-atomic.
///
/// Every read returns a value some writer stored; there is no lock and no
/// cross-coordinate consistency.
pub struct SharedModel {
    coords: Vec<AtomicU64>,
}

impl SharedModel {
    pub fn zeros(dim: usize) -> Self {
        Self::from_slice(&vec![0.0; dim])
    }

    pub fn from_slice(w: &[f64]) -> Self {
        SharedModel { coords: w.iter().map(|v| AtomicU64::new(v.to_bits())).collect() }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn get(&self, j: usize) -> f64 {
        f64::from_bits(self.coords[j].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn set(&self, j: usize, value: f64) {
        self.coords[j].store(value.to_bits(), Ordering::Relaxed);
    }

    /// `w_j <- w_j - delta`.
    #[inline]
    pub fn subtract(&self, j: usize, delta: f64, mode: UpdateMode) {
        let cell = &self.coords[j];
        match mode {
            UpdateMode::Hogwild => {
                let cur = f64::from_bits(cell.load(Ordering::Relaxed));
                cell.store((cur - delta).to_bits(), Ordering::Relaxed);
            }
            UpdateMode::CompareExchange => {
                let _ = cell.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
                    Some((f64::from_bits(bits) - delta).to_bits())
                });
            }
        }
    }

    pub fn copy_from(&self, other: &SharedModel) {
        for (dst, src) in self.coords.iter().zip(&other.coords) {
            dst.store(src.load(Ordering::Relaxed), Ordering::Relaxed);
        }
    }

    pub fn store_slice(&self, w: &[f64]) {
        for (j, &v) in w.iter().enumerate() {
            self.set(j, v);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.get(j)).collect()
    }
}

impl Weights for SharedModel {
    #[inline]
    fn weight(&self, j: usize) -> f64 {
        self.get(j)
    }

    fn dim(&self) -> usize {
        self.len()
    }
}
