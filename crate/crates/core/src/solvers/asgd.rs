use rand::seq::SliceRandom;
use rand::Rng;

use super::rendezvous::Aborted;
use super::{drive, EpochWorker, LoggedUpdate, Result, RunOutcome, SharedModel, SharedRun, SolverConfig};
use crate::data::{partition_contiguous, Partition, SparseDataset};
use crate::importance::{
    check_permutation, choose_ordering, generate_sequence_with, random_shuffle, sampling_distribution, AliasSampler,
    ImportanceError, SampleOrdering,
};
use crate::objectives::Objective;
use crate::rng;

/// Worker over one contiguous partition. Without a sampler it draws
/// uniformly; with one it follows a pre-generated importance sequence and
/// scales each step by the sample's weight.
struct PartitionWorker {
    tid: usize,
    samples: Vec<usize>,
    importance: Option<(AliasSampler, Vec<f64>)>,
    sequence_mode: super::SequenceMode,
    sequence: Vec<usize>,
    rng: rng::Rng,
    grad: Vec<f64>,
    log: Vec<LoggedUpdate>,
}

impl PartitionWorker {
    fn new(tid: usize, samples: Vec<usize>, importance: Option<(AliasSampler, Vec<f64>)>, cfg: &SolverConfig) -> Self {
        PartitionWorker {
            tid,
            sequence: Vec::with_capacity(samples.len()),
            samples,
            importance,
            sequence_mode: cfg.sequence_mode,
            rng: rng::worker_stream(cfg.seed, tid),
            grad: Vec::new(),
            log: Vec::new(),
        }
    }

    fn refill_sequence(&mut self, epoch: usize) {
        let len = self.samples.len();
        match &self.importance {
            None => {
                self.sequence.clear();
                let rng = &mut self.rng;
                self.sequence.extend((0..len).map(|_| rng.gen_range(0..len)));
            }
            Some((sampler, _)) => {
                if epoch == 1 || self.sequence_mode == super::SequenceMode::Regenerate {
                    self.sequence = generate_sequence_with(sampler, len, &mut self.rng);
                } else {
                    self.sequence.shuffle(&mut self.rng);
                }
            }
        }
    }
}

impl EpochWorker for PartitionWorker {
    fn thread_id(&self) -> usize {
        self.tid
    }

    fn run_epoch(&mut self, epoch: usize, shared: &SharedRun<'_>) -> std::result::Result<(), Aborted> {
        self.refill_sequence(epoch);
        let mut touched = 0u64;
        for &local in &self.sequence {
            let i = self.samples[local];
            let scale = self.importance.as_ref().map_or(1.0, |(_, scales)| scales[local]);
            let ticket = if shared.record_samples { shared.ticket() } else { 0 };
            shared.obj.gradient_into(shared.ds, i, shared.model, &mut self.grad);
            shared.apply_sparse(i, scale, &self.grad);
            touched += self.grad.len() as u64;
            if shared.record_samples {
                self.log.push(LoggedUpdate { ticket, thread_id: self.tid, sample: i, scale });
            }
        }
        shared.add_touched(touched);
        Ok(())
    }

    fn take_log(&mut self) -> Vec<LoggedUpdate> {
        std::mem::take(&mut self.log)
    }
}

/// Lock-free ASGD: a seeded shuffle is split into contiguous partitions and
/// every worker samples uniformly from its own partition.
pub fn run_asgd(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective) -> Result<RunOutcome> {
    cfg.validate(ds.len())?;
    let order = random_shuffle(ds.len(), cfg.seed);
    let partitions = partition_contiguous(&order, cfg.num_threads)?;
    let workers = partitions
        .iter()
        .map(|p| PartitionWorker::new(p.thread_id, p.slice(&order).to_vec(), None, cfg))
        .collect();
    let model = SharedModel::zeros(ds.dim());
    let shared = SharedRun::new(cfg, ds, obj, &model);
    let out = drive(cfg, &shared, "asgd", workers)?;
    Ok(RunOutcome {
        trace: out.trace,
        weights: model.to_vec(),
        sample_log: out.sample_log,
        ordering: Some(SampleOrdering { order, balanced: false, gate_fired: false }),
        snapshots: Vec::new(),
    })
}

/// Everything IS-ASGD decides before training starts.
#[derive(Debug, Clone, PartialEq)]
pub struct IsAsgdPlan {
    pub lipschitz: Vec<f64>,
    pub ordering: SampleOrdering,
    pub partitions: Vec<Partition>,
    /// Per-partition sampling distribution over the partition's positions.
    pub local_distributions: Vec<Vec<f64>>,
    /// Per-partition step multipliers `1 / (n_local p_i)`, capped if requested.
    pub scales: Vec<Vec<f64>>,
}

impl IsAsgdPlan {
    pub fn new(lipschitz: Vec<f64>, ordering: SampleOrdering, num_threads: usize, weight_cap: Option<f64>) -> Result<Self> {
        check_permutation(&ordering.order, lipschitz.len())?;
        let partitions = partition_contiguous(&ordering.order, num_threads)?;
        let mut local_distributions = Vec::with_capacity(num_threads);
        let mut scales = Vec::with_capacity(num_threads);
        for p in &partitions {
            let local: Vec<f64> = p.slice(&ordering.order).iter().map(|&i| lipschitz[i]).collect();
            let dist = sampling_distribution(&local)?;
            let phi: f64 = local.iter().sum();
            let n_local = local.len() as f64;
            let uniform = local.iter().all(|&l| l == local[0]);
            let weights = local
                .iter()
                .map(|l| {
                    let w = if uniform { 1.0 } else { phi / (n_local * l) };
                    weight_cap.map_or(w, |cap| w.min(cap))
                })
                .collect();
            local_distributions.push(dist);
            scales.push(weights);
        }
        Ok(IsAsgdPlan { lipschitz, ordering, partitions, local_distributions, scales })
    }

    /// Computes importances from `obj` and applies the balancing gate.
    pub fn from_config(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective) -> Result<Self> {
        let lipschitz = obj.lipschitz_bounds(ds).map_err(ImportanceError::from)?;
        let ordering = choose_ordering(&lipschitz, cfg.balance_mode, cfg.zeta, cfg.seed)?;
        Self::new(lipschitz, ordering, cfg.num_threads, cfg.is_weight_cap)
    }
}

/// IS-ASGD with importances and ordering derived inline from the config.
pub fn run_is_asgd(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective) -> Result<RunOutcome> {
    cfg.validate(ds.len())?;
    let plan = IsAsgdPlan::from_config(cfg, ds, obj)?;
    run_is_asgd_with(cfg, ds, obj, plan)
}

/// IS-ASGD over a prepared plan: each worker samples its partition from the
/// local distribution via a pre-generated sequence and scales its step.
pub fn run_is_asgd_with(cfg: &SolverConfig, ds: &SparseDataset, obj: &Objective, plan: IsAsgdPlan) -> Result<RunOutcome> {
    cfg.validate(ds.len())?;
    if plan.lipschitz.len() != ds.len() || plan.partitions.len() != cfg.num_threads {
        return Err(ImportanceError::NotPermutation(ds.len()).into());
    }
    let mut workers = Vec::with_capacity(cfg.num_threads);
    for (p, (dist, scales)) in plan.partitions.iter().zip(plan.local_distributions.iter().zip(&plan.scales)) {
        let sampler = AliasSampler::new(dist)?;
        let samples = p.slice(&plan.ordering.order).to_vec();
        workers.push(PartitionWorker::new(p.thread_id, samples, Some((sampler, scales.clone())), cfg));
    }
    let model = SharedModel::zeros(ds.dim());
    let shared = SharedRun::new(cfg, ds, obj, &model);
    let out = drive(cfg, &shared, "is-asgd", workers)?;
    Ok(RunOutcome {
        trace: out.trace,
        weights: model.to_vec(),
        sample_log: out.sample_log,
        ordering: Some(plan.ordering),
        snapshots: Vec::new(),
    })
}
