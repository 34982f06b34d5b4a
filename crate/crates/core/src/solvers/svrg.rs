use std::sync::Mutex;

use rand::Rng;

use super::rendezvous::Aborted;
use super::{drive, share, EpochWorker, LoggedUpdate, Result, RunOutcome, SharedModel, SharedRun, SolverConfig};
use crate::data::{partition_contiguous, SparseDataset};
use crate::importance::{random_shuffle, SampleOrdering};
use crate::objectives::{Objective, Weights};
use crate::rng;

/// Snapshot point `s` and the full gradient `mu` at `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgState {
    pub snapshot: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Sum of per-sample gradients over samples `[n*t/T, n*(t+1)/T)`.
fn chunk_gradient_sum<W: Weights + ?Sized>(obj: &Objective, ds: &SparseDataset, w: &W, tid: usize, num_threads: usize, acc: &mut [f64]) {
    let n = ds.len();
    let lo = ((n as u128 * tid as u128) / num_threads as u128) as usize;
    let hi = ((n as u128 * (tid + 1) as u128) / num_threads as u128) as usize;
    acc.iter_mut().for_each(|g| *g = 0.0);
    obj.accumulate_gradients(ds, lo..hi, w, acc);
}

/// Adds chunk sums in thread order and divides by `n`.
fn combine_chunks<'a>(chunks: impl Iterator<Item = &'a [f64]>, dim: usize, n: usize) -> Vec<f64> {
    let mut mu = vec![0.0; dim];
    for chunk in chunks {
        for (m, c) in mu.iter_mut().zip(chunk) {
            *m += c;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    mu
}

impl SvrgState {
    /// Takes a snapshot at `w`, reducing the full gradient over
    /// `num_threads` sample chunks the same way the solver does.
    pub fn capture(obj: &Objective, ds: &SparseDataset, w: &[f64], num_threads: usize) -> Self {
        let chunks: Vec<Vec<f64>> = (0..num_threads)
            .map(|t| {
                let mut acc = vec![0.0; ds.dim()];
                chunk_gradient_sum(obj, ds, w, t, num_threads, &mut acc);
                acc
            })
            .collect();
        SvrgState { snapshot: w.to_vec(), mu: combine_chunks(chunks.iter().map(|c| &c[..]), ds.dim(), ds.len()) }
    }
}

/// Dense variance-reduced direction `grad f_i(w) - grad f_i(s) + mu`.
pub fn svrg_direction(obj: &Objective, ds: &SparseDataset, i: usize, w: &[f64], state: &SvrgState) -> Vec<f64> {
    let (mut gw, mut gs) = (Vec::new(), Vec::new());
    obj.gradient_into(ds, i, w, &mut gw);
    obj.gradient_into(ds, i, &state.snapshot, &mut gs);
    let mut v = state.mu.clone();
    for (k, &j) in ds.row(i).0.iter().enumerate() {
        v[j as usize] += gw[k] - gs[k];
    }
    v
}

struct SnapshotSync {
    snapshot: SharedModel,
    mu: SharedModel,
    partials: Vec<Mutex<Vec<f64>>>,
    period: usize,
    record: bool,
    states: Mutex<Vec<SvrgState>>,
}

struct SvrgWorker<'s> {
    tid: usize,
    samples: Vec<usize>,
    rng: rng::Rng,
    grad_w: Vec<f64>,
    grad_s: Vec<f64>,
    partial: Vec<f64>,
    sync: &'s SnapshotSync,
    log: Vec<LoggedUpdate>,
}

impl SvrgWorker<'_> {
    fn take_snapshot(&mut self, shared: &SharedRun<'_>) -> std::result::Result<(), Aborted> {
        let sync = self.sync;
        if shared.workers.wait()? {
            sync.snapshot.copy_from(shared.model);
        }
        shared.workers.wait()?;
        chunk_gradient_sum(shared.obj, shared.ds, &sync.snapshot, self.tid, shared.num_threads, &mut self.partial);
        std::mem::swap(&mut *sync.partials[self.tid].lock().unwrap(), &mut self.partial);
        if shared.workers.wait()? {
            let guards: Vec<_> = sync.partials.iter().map(|p| p.lock().unwrap()).collect();
            let mu = combine_chunks(guards.iter().map(|g| &g[..]), shared.ds.dim(), shared.ds.len());
            sync.mu.store_slice(&mu);
            if sync.record {
                sync.states.lock().unwrap().push(SvrgState { snapshot: sync.snapshot.to_vec(), mu });
            }
        }
        shared.workers.wait()?;
        Ok(())
    }

    fn step(&mut self, shared: &SharedRun<'_>) -> u64 {
        let i = self.samples[self.rng.gen_range(0..self.samples.len())];
        let ticket = if shared.record_samples { shared.ticket() } else { 0 };
        shared.obj.gradient_into(shared.ds, i, shared.model, &mut self.grad_w);
        shared.obj.gradient_into(shared.ds, i, &self.sync.snapshot, &mut self.grad_s);
        let support = shared.ds.row(i).0;
        let delta = shared.step_size * 1.0;
        let mut k = 0;
        // Dense write over every coordinate: the mu term is nonzero almost everywhere.
        for j in 0..shared.model.len() {
            let mut v = self.sync.mu.get(j);
            if k < support.len() && support[k] as usize == j {
                v += self.grad_w[k] - self.grad_s[k];
                k += 1;
            }
            shared.model.subtract(j, delta * v, shared.update_mode);
        }
        if shared.record_samples {
            self.log.push(LoggedUpdate { ticket, thread_id: self.tid, sample: i, scale: 1.0 });
        }
        shared.model.len() as u64
    }
}

impl EpochWorker for SvrgWorker<'_> {
    fn thread_id(&self) -> usize {
        self.tid
    }

    fn run_epoch(&mut self, epoch: usize, shared: &SharedRun<'_>) -> std::result::Result<(), Aborted> {
        let n = shared.ds.len();
        let period = self.sync.period;
        let (mut cursor, end) = ((epoch - 1) * n, epoch * n);
        let mut touched = 0u64;
        while cursor < end {
            let next = end.min((cursor / period + 1) * period);
            if cursor % period == 0 {
                self.take_snapshot(shared)?;
            }
            for _ in 0..share(next - cursor, self.tid, shared.num_threads) {
                touched += self.step(shared);
            }
            cursor = next;
        }
        shared.add_touched(touched);
        Ok(())
    }

    fn take_log(&mut self) -> Vec<LoggedUpdate> {
        std::mem::take(&mut self.log)
    }
}

/// SVRG-ASGD with the full gradient added on every iteration: workers
/// rendezvous every `svrg_sync_period` global iterations to snapshot the
/// model and reduce `mu`, and each update writes all `d` coordinates.
pub fn run_svrg_asgd(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective) -> Result<RunOutcome> {
    cfg.validate(ds.len())?;
    let order = random_shuffle(ds.len(), cfg.seed);
    let partitions = partition_contiguous(&order, cfg.num_threads)?;
    let sync = SnapshotSync {
        snapshot: SharedModel::zeros(ds.dim()),
        mu: SharedModel::zeros(ds.dim()),
        partials: (0..cfg.num_threads).map(|_| Mutex::new(vec![0.0; ds.dim()])).collect(),
        period: cfg.svrg_sync_period.unwrap_or(ds.len()),
        record: cfg.record_snapshots,
        states: Mutex::new(Vec::new()),
    };
    let workers = partitions
        .iter()
        .map(|p| SvrgWorker {
            tid: p.thread_id,
            samples: p.slice(&order).to_vec(),
            rng: rng::worker_stream(cfg.seed, p.thread_id),
            grad_w: Vec::new(),
            grad_s: Vec::new(),
            partial: vec![0.0; ds.dim()],
            sync: &sync,
            log: Vec::new(),
        })
        .collect();
    let model = SharedModel::zeros(ds.dim());
    let shared = SharedRun::new(cfg, ds, obj, &model);
    let out = drive(cfg, &shared, "svrg-asgd", workers)?;
    Ok(RunOutcome {
        trace: out.trace,
        weights: model.to_vec(),
        sample_log: out.sample_log,
        ordering: Some(SampleOrdering { order, balanced: false, gate_fired: false }),
        snapshots: sync.states.into_inner().unwrap(),
    })
}
