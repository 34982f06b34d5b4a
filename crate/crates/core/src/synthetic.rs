//! Seeded synthetic datasets for tests, benchmarks and examples.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use crate::data::SparseDataset;
use crate::rng::Rng as ChaCha;

fn random_row<R: Rng>(rng: &mut R, d: usize, nnz: usize) -> Vec<(u32, f64)> {
    let mut idx: Vec<usize> = sample(rng, d, nnz).into_vec();
    idx.sort_unstable();
    idx.into_iter()
        .map(|j| {
            // magnitudes in [0.1, 1] with random sign, never zero
            let v: f64 = rng.gen_range(0.1..1.0);
            (j as u32, if rng.gen_bool(0.5) { v } else { -v })
        })
        .collect()
}

fn normalize(row: &mut [(u32, f64)], target: f64) {
    let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    row.iter_mut().for_each(|(_, v)| *v *= target / norm);
}

fn dense_direction<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(row: &[(u32, f64)], w: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| w[j as usize] * v).sum()
}

/// Random sparse rows with `1..=max_nnz` features and random labels.
pub fn random_sparse(n: usize, d: usize, max_nnz: usize, seed: u64) -> SparseDataset {
    let mut rng = ChaCha::seed_from_u64(seed);
    let rows: Vec<_> = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=max_nnz.min(d));
            random_row(&mut rng, d, k)
        })
        .collect();
    let labels = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    SparseDataset::from_rows(rows, labels, Some(d)).expect("generated rows are valid")
}

/// Unit-norm rows labelled by a hidden hyperplane, keeping only rows whose
/// normalized margin is at least `0.05`, so the data is linearly separable.
pub fn separable(n: usize, d: usize, nnz: usize, seed: u64) -> SparseDataset {
    let mut rng = ChaCha::seed_from_u64(seed);
    let truth = dense_direction(&mut rng, d);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let mut row = random_row(&mut rng, d, nnz);
        normalize(&mut row, 1.0);
        let m = dot(&row, &truth);
        if m.abs() >= 0.05 {
            labels.push(m.signum());
            rows.push(row);
        }
    }
    SparseDataset::from_rows(rows, labels, Some(d)).expect("generated rows are valid")
}

/// Importance-skewed data: a `heavy_fraction` of rows have unit norm, the
/// rest are scaled down to norm `light_norm`. Labels follow a hidden
/// hyperplane with `label_noise` of them flipped.
pub fn skewed(
    n: usize,
    d: usize,
    nnz: usize,
    heavy_fraction: f64,
    light_norm: f64,
    label_noise: f64,
    seed: u64,
) -> SparseDataset {
    let mut rng = ChaCha::seed_from_u64(seed);
    let truth = dense_direction(&mut rng, d);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = random_row(&mut rng, d, nnz);
        let heavy = rng.gen_bool(heavy_fraction);
        normalize(&mut row, if heavy { 1.0 } else { light_norm });
        let mut y = if dot(&row, &truth) >= 0.0 { 1.0 } else { -1.0 };
        if rng.gen_bool(label_noise) {
            y = -y;
        }
        rows.push(row);
        labels.push(y);
    }
    SparseDataset::from_rows(rows, labels, Some(d)).expect("generated rows are valid")
}

/// Rows with pairwise-disjoint supports (`nnz` consecutive features each).
pub fn disjoint(n: usize, nnz: usize, seed: u64) -> SparseDataset {
    let mut rng = ChaCha::seed_from_u64(seed);
    let rows: Vec<_> = (0..n)
        .map(|i| (0..nnz).map(|k| ((i * nnz + k) as u32, rng.gen_range(0.2..1.0))).collect())
        .collect();
    let labels = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    SparseDataset::from_rows(rows, labels, None).expect("generated rows are valid")
}
