//! Brute-force oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use isasgd::objectives::{Family, Objective};
use isasgd::SparseDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Average conflict-graph degree from an explicit adjacency matrix built on
/// dense rows.
pub fn conflict_graph_degree(ds: &SparseDataset) -> f64 {
    let dense: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.dense_row(i)).collect();
    let n = ds.len();
    let mut adjacency = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                adjacency[i][j] = dense[i].iter().zip(&dense[j]).any(|(a, b)| *a != 0.0 && *b != 0.0);
            }
        }
    }
    let edges: usize = adjacency.iter().map(|row| row.iter().filter(|&&e| e).count()).sum();
    edges as f64 / n as f64
}

pub fn dense_grads(ds: &SparseDataset, obj: &Objective, w: &[f64]) -> Vec<Vec<f64>> {
    (0..ds.len()).map(|i| obj.grad(ds, i, w).unwrap().to_dense(ds.dim())).collect()
}

pub fn mean_grad(grads: &[Vec<f64>]) -> Vec<f64> {
    let n = grads.len() as f64;
    let mut out = vec![0.0; grads[0].len()];
    for g in grads {
        for (o, v) in out.iter_mut().zip(g) {
            *o += v / n;
        }
    }
    out
}

/// `E ||(n p_i)^-1 g_i - grad F||^2` with the expectation summed exactly.
pub fn exact_variance(grads: &[Vec<f64>], p: &[f64]) -> f64 {
    let n = grads.len() as f64;
    let full = mean_grad(grads);
    grads
        .iter()
        .zip(p)
        .filter(|(_, &pi)| pi > 0.0)
        .map(|(g, &pi)| pi * g.iter().zip(&full).map(|(gj, fj)| (gj / (n * pi) - fj).powi(2)).sum::<f64>())
        .sum()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-radius..radius)).collect()
}

/// Largest per-coordinate gap between `sum_i p_i (n p_i)^-1 g_i` and the
/// full gradient.
pub fn unbiasedness_gap(ds: &SparseDataset, obj: &Objective, w: &[f64], p: &[f64]) -> f64 {
    let grads = dense_grads(ds, obj, w);
    let n = ds.len() as f64;
    let mut estimate = vec![0.0; ds.dim()];
    for (g, &pi) in grads.iter().zip(p) {
        for (e, gj) in estimate.iter_mut().zip(g) {
            *e += pi * gj / (n * pi);
        }
    }
    let full = obj.full_gradient(ds, w).unwrap();
    estimate.iter().zip(&full).map(|(e, f)| (e - f).abs()).fold(0.0, f64::max)
}

const H: f64 = 1e-6;

/// Moves coordinates away from points where the loss is not differentiable:
/// the hinge kink (margin 1) and, for L1, zero weights. Returns false when
/// the point sits on the kink.
fn smooth_point(obj: &Objective, ds: &SparseDataset, i: usize, w: &mut [f64]) -> bool {
    let (idx, val) = ds.row(i);
    if obj.family() == Family::LogisticL1 {
        for &j in idx {
            if w[j as usize].abs() < 1e-3 {
                w[j as usize] = 1e-3_f64.copysign(w[j as usize] + 1e-300);
            }
        }
    }
    let margin = ds.label(i) * idx.iter().zip(val).map(|(&j, &x)| w[j as usize] * x).sum::<f64>();
    (margin - 1.0).abs() > 1e-3
}

/// Central differences at 100 random points; returns the worst relative
/// error seen.
pub fn finite_difference_error(obj: &Objective, seed: u64) -> f64 {
    let ds = isasgd::synthetic::random_sparse(30, 15, 6, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 100 {
        let i = rng.gen_range(0..ds.len());
        let mut w = random_point(&mut rng, ds.dim(), 1.5);
        if !smooth_point(obj, &ds, i, &mut w) {
            continue;
        }
        checked += 1;
        let g = obj.grad(&ds, i, &w).unwrap().to_dense(ds.dim());
        for j in ds.row(i).0.iter().map(|&j| j as usize) {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[j] += H;
            minus[j] -= H;
            let fd = (obj.loss(&ds, i, &plus).unwrap() - obj.loss(&ds, i, &minus).unwrap()) / (2.0 * H);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1e-3));
        }
    }
    worst
}
