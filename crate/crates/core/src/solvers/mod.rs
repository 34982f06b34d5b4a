//! Training loops: serial SGD, lock-free ASGD, importance-sampled ASGD and
//! SVRG-ASGD, all writing to a [`SharedModel`].
//!
//! Threaded solvers run `num_threads` long-lived workers, each owning a
//! contiguous partition of a reordered sample array. One epoch is `n`
//! updates in total. Workers meet the coordinating thread at epoch
//! boundaries only; SVRG workers additionally rendezvous for snapshots.

mod asgd;
mod config;
mod model;
mod rendezvous;
mod sgd;
mod svrg;

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use asgd::{run_asgd, run_is_asgd, run_is_asgd_with, IsAsgdPlan};
pub use config::{Algorithm, ConfigError, SequenceMode, SolverConfig};
pub use model::{SharedModel, UpdateMode};
pub use sgd::run_sgd;
pub use svrg::{run_svrg_asgd, svrg_direction, SvrgState};

use crate::data::{DataError, SparseDataset};
use crate::importance::{ImportanceError, SampleOrdering};
use crate::metrics::{error_rate, rmse_with, ConvergenceTrace};
use crate::objectives::Objective;
use rendezvous::{Aborted, Rendezvous};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("worker {thread_id} panicked: {message}")]
    WorkerPanic { thread_id: usize, message: String },
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// One applied update, for replaying a run serially.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedUpdate {
    /// Global order in which the update was started.
    pub ticket: u64,
    pub thread_id: usize,
    pub sample: usize,
    /// Multiplier on the step size (the importance weight, or 1).
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: ConvergenceTrace,
    pub weights: Vec<f64>,
    /// Present when `record_samples` is set; sorted by ticket.
    pub sample_log: Option<Vec<LoggedUpdate>>,
    /// Dataset ordering used for partitioning, for partitioned solvers.
    pub ordering: Option<SampleOrdering>,
    /// SVRG snapshots in the order taken, when `record_snapshots` is set.
    pub snapshots: Vec<SvrgState>,
}

/// Runs the solver selected by `cfg.algorithm`.
pub fn train(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective) -> Result<RunOutcome> {
    match cfg.algorithm {
        Algorithm::Sgd => run_sgd(cfg, ds, obj),
        Algorithm::Asgd => run_asgd(cfg, ds, obj),
        Algorithm::IsAsgd => run_is_asgd(cfg, ds, obj),
        Algorithm::SvrgAsgd => run_svrg_asgd(cfg, ds, obj),
    }
}

/// Applies a logged update sequence serially from `w = 0`.
pub fn replay_log(ds: &SparseDataset, obj: &Objective, step_size: f64, log: &[LoggedUpdate]) -> Vec<f64> {
    let mut w = vec![0.0; ds.dim()];
    let mut buf = Vec::new();
    for entry in log {
        obj.gradient_into(ds, entry.sample, &w, &mut buf);
        for (&j, &g) in ds.row(entry.sample).0.iter().zip(&buf) {
            w[j as usize] -= step_size * entry.scale * g;
        }
    }
    w
}

/// State shared by all workers of one threaded run.
pub(crate) struct SharedRun<'a> {
    pub ds: &'a SparseDataset,
    pub obj: &'a Objective,
    pub model: &'a SharedModel,
    pub step_size: f64,
    pub update_mode: UpdateMode,
    pub num_threads: usize,
    pub record_samples: bool,
    tickets: AtomicU64,
    touched: AtomicU64,
    pub workers: Rendezvous,
}

impl<'a> SharedRun<'a> {
    pub(crate) fn new(cfg: &SolverConfig, ds: &'a SparseDataset, obj: &'a Objective, model: &'a SharedModel) -> Self {
        SharedRun {
            ds,
            obj,
            model,
            step_size: cfg.step_size,
            update_mode: cfg.update_mode,
            num_threads: cfg.num_threads,
            record_samples: cfg.record_samples,
            tickets: AtomicU64::new(0),
            touched: AtomicU64::new(0),
            workers: Rendezvous::new(cfg.num_threads),
        }
    }

    #[inline]
    pub(crate) fn ticket(&self) -> u64 {
        self.tickets.fetch_add(1, Ordering::Relaxed)
    }

    pub(crate) fn add_touched(&self, count: u64) {
        self.touched.fetch_add(count, Ordering::Relaxed);
    }

    /// Sparse update `w_S <- w_S - step * scale * grad_S` for sample `i`,
    /// using the gradient already in `grad`.
    #[inline]
    pub(crate) fn apply_sparse(&self, i: usize, scale: f64, grad: &[f64]) {
        let delta = self.step_size * scale;
        for (&j, &g) in self.ds.row(i).0.iter().zip(grad) {
            self.model.subtract(j as usize, delta * g, self.update_mode);
        }
    }
}

/// Per-thread half of a threaded solver.
pub(crate) trait EpochWorker: Send {
    fn thread_id(&self) -> usize;

    /// Runs this worker's share of epoch `epoch` (1-based).
    fn run_epoch(&mut self, epoch: usize, shared: &SharedRun<'_>) -> std::result::Result<(), Aborted>;

    fn take_log(&mut self) -> Vec<LoggedUpdate> {
        Vec::new()
    }
}

pub(crate) struct DriveOutput {
    pub trace: ConvergenceTrace,
    pub sample_log: Option<Vec<LoggedUpdate>>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic payload".to_string()
    }
}

#[allow(clippy::too_many_arguments)]
fn record_metrics(trace: &mut ConvergenceTrace, cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective, epoch: usize, elapsed: Duration, w: &[f64], touched_per_iter: f64) {
    trace.push(epoch, elapsed.as_secs_f64(), rmse_with(cfg.rmse_mode, ds, obj, w), error_rate(ds, w), touched_per_iter);
}

/// Runs `workers` for `cfg.epochs` epochs, timing the update phases and
/// evaluating metrics on a copy of the model taken at each epoch barrier.
pub(crate) fn drive<W: EpochWorker>(cfg: &SolverConfig, shared: &SharedRun<'_>, label: &str, workers: Vec<W>) -> Result<DriveOutput> {
    let (ds, obj) = (shared.ds, shared.obj);
    let epoch_gate = Rendezvous::new(workers.len() + 1);
    let logs: Mutex<Vec<LoggedUpdate>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<SolverError>> = Mutex::new(None);
    let mut trace = ConvergenceTrace::new(label, cfg.num_threads, cfg.seed);
    record_metrics(&mut trace, cfg, ds, obj, 0, Duration::ZERO, &shared.model.to_vec(), 0.0);

    std::thread::scope(|scope| {
        for mut worker in workers {
            let (epoch_gate, logs, failure) = (&epoch_gate, &logs, &failure);
            let fail_at = cfg.fail_worker_at_epoch;
            scope.spawn(move || {
                let tid = worker.thread_id();
                let body = panic::catch_unwind(AssertUnwindSafe(|| -> std::result::Result<(), Aborted> {
                    for epoch in 1..=cfg.epochs {
                        epoch_gate.wait()?;
                        if fail_at == Some(epoch) && tid == 0 {
                            panic!("injected failure at epoch {epoch}");
                        }
                        worker.run_epoch(epoch, shared)?;
                        epoch_gate.wait()?;
                    }
                    Ok(())
                }));
                match body {
                    Ok(Ok(())) => logs.lock().unwrap().extend(worker.take_log()),
                    Ok(Err(Aborted)) => {}
                    Err(payload) => {
                        let message = panic_message(payload);
                        log::error!("worker {tid} panicked: {message}");
                        failure.lock().unwrap().get_or_insert(SolverError::WorkerPanic { thread_id: tid, message });
                        epoch_gate.abort();
                        shared.workers.abort();
                    }
                }
            });
        }

        let mut elapsed = Duration::ZERO;
        for epoch in 1..=cfg.epochs {
            let start = Instant::now();
            if epoch_gate.wait().is_err() {
                return;
            }
            if epoch_gate.wait().is_err() {
                return;
            }
            elapsed += start.elapsed();
            let touched = shared.touched.swap(0, Ordering::Relaxed);
            let w = shared.model.to_vec();
            record_metrics(&mut trace, cfg, ds, obj, epoch, elapsed, &w, touched as f64 / ds.len() as f64);
            log::debug!("{label} epoch {epoch}: {:?}", trace.last());
        }
    });

    if let Some(err) = failure.into_inner().unwrap() {
        return Err(err);
    }
    let sample_log = shared.record_samples.then(|| {
        let mut log = logs.into_inner().unwrap();
        log.sort_by_key(|e| e.ticket);
        log
    });
    Ok(DriveOutput { trace, sample_log })
}

/// Number of iterations thread `tid` runs out of `total` split `num_threads` ways.
pub(crate) fn share(total: usize, tid: usize, num_threads: usize) -> usize {
    let bound = |t: usize| ((total as u128 * t as u128) / num_threads as u128) as usize;
    bound(tid + 1) - bound(tid)
}
