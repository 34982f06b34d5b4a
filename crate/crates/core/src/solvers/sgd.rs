use std::time::{Duration, Instant};

use rand::Rng;

use super::{record_metrics, LoggedUpdate, Result, RunOutcome, SolverConfig};
use crate::data::SparseDataset;
use crate::metrics::ConvergenceTrace;
use crate::objectives::Objective;
use crate::rng;

/// Serial SGD with uniform sampling: `w <- w - step * grad f_i(w)`.
pub fn run_sgd(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective) -> Result<RunOutcome> {
    cfg.validate(ds.len())?;
    let n = ds.len();
    let mut rng = rng::stream(cfg.seed, rng::SGD_STREAM);
    let mut w = vec![0.0; ds.dim()];
    let mut buf = Vec::new();
    let mut log = cfg.record_samples.then(Vec::new);
    let mut trace = ConvergenceTrace::new("sgd", 1, cfg.seed);
    record_metrics(&mut trace, cfg, ds, obj, 0, Duration::ZERO, &w, 0.0);

    let mut elapsed = Duration::ZERO;
    let mut ticket = 0u64;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut touched = 0usize;
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            obj.gradient_into(ds, i, &w, &mut buf);
            let delta = cfg.step_size * 1.0;
            for (&j, &g) in ds.row(i).0.iter().zip(&buf) {
                w[j as usize] -= delta * g;
            }
            touched += buf.len();
            if let Some(log) = log.as_mut() {
                log.push(LoggedUpdate { ticket, thread_id: 0, sample: i, scale: 1.0 });
            }
            ticket += 1;
        }
        elapsed += start.elapsed();
        record_metrics(&mut trace, cfg, ds, obj, epoch, elapsed, &w, touched as f64 / n as f64);
    }
    Ok(RunOutcome { trace, weights: w, sample_log: log, ordering: None, snapshots: Vec::new() })
}
