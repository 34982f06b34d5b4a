use isasgd::importance::{choose_ordering, random_shuffle, BalanceMode, SampleOrdering};
use isasgd::metrics::{ConvergenceTrace, TraceRecord};
use isasgd::objectives::Objective;
use isasgd::solvers::{
    replay_log, run_is_asgd_with, svrg_direction, Algorithm, IsAsgdPlan, SequenceMode, SolverError, SvrgState, UpdateMode,
};
use isasgd::{synthetic, train, SolverConfig, SparseDataset};

const ALL: [Algorithm; 4] = [Algorithm::Sgd, Algorithm::Asgd, Algorithm::IsAsgd, Algorithm::SvrgAsgd];

fn config(algorithm: Algorithm, step_size: f64, epochs: usize, num_threads: usize, seed: u64) -> SolverConfig {
    SolverConfig { algorithm, step_size, epochs, num_threads, seed, ..SolverConfig::default() }
}

/// Every column except wall-clock time.
fn deterministic_columns(trace: &ConvergenceTrace) -> Vec<[f64; 5]> {
    trace
        .records
        .iter()
        .map(|r: &TraceRecord| [r.epoch as f64, r.rmse, r.error_rate, r.best_error_rate, r.touched_coords_per_iter])
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

#[test]
fn sgd_step_decreases_single_sample_loss() {
    let ds = SparseDataset::from_rows(vec![vec![(0, 1.0), (2, -0.5)]], vec![1.0], None).unwrap();
    let obj = Objective::squared_hinge(0.1).unwrap();
    let out = train(&config(Algorithm::Sgd, 0.05, 1, 1, 0), &ds, &obj).unwrap();
    let before = obj.loss(&ds, 0, &[0.0; 3][..]).unwrap();
    let after = obj.loss(&ds, 0, &out.weights).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn every_solver_separates_separable_data() {
    let ds = synthetic::separable(300, 40, 6, 3);
    let obj = Objective::squared_hinge(1e-4).unwrap();
    for algorithm in ALL {
        for num_threads in [1, 4] {
            let cfg = SolverConfig { sequence_mode: SequenceMode::Regenerate, ..config(algorithm, 0.5, 40, num_threads, 11) };
            let out = train(&cfg, &ds, &obj).unwrap();
            out.trace.validate().unwrap();
            assert_eq!(out.trace.best_error_rate(), Some(0.0), "{algorithm} with {num_threads} threads");
        }
    }
}

#[test]
fn single_thread_runs_are_reproducible() {
    let ds = synthetic::random_sparse(120, 30, 5, 4);
    let obj = Objective::logistic(0.01).unwrap();
    for algorithm in ALL {
        let cfg = config(algorithm, 0.2, 4, 1, 77);
        let a = train(&cfg, &ds, &obj).unwrap();
        let b = train(&cfg, &ds, &obj).unwrap();
        let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.weights), bits(&b.weights), "{algorithm}");
        assert_eq!(deterministic_columns(&a.trace), deterministic_columns(&b.trace), "{algorithm}");
    }
}

#[test]
fn conflict_free_runs_replay_serially() {
    let ds = synthetic::disjoint(64, 3, 5);
    let obj = Objective::squared_hinge(0.2).unwrap();
    for algorithm in [Algorithm::Asgd, Algorithm::IsAsgd] {
        for num_threads in [2, 4] {
            let cfg = SolverConfig { record_samples: true, ..config(algorithm, 0.3, 3, num_threads, 8) };
            let out = train(&cfg, &ds, &obj).unwrap();
            let log = out.sample_log.unwrap();
            assert_eq!(log.len(), 3 * 64);
            assert_eq!(replay_log(&ds, &obj, cfg.step_size, &log), out.weights, "{algorithm} T={num_threads}");
        }
    }
}

#[test]
fn four_sample_plan_has_local_distributions() {
    let l = vec![1.0, 2.0, 3.0, 4.0];
    let ordering = choose_ordering(&l, BalanceMode::Always, 5e-4, 0).unwrap();
    assert_eq!(ordering.order, vec![0, 3, 1, 2]);
    let plan = IsAsgdPlan::new(l, ordering, 2, None).unwrap();
    assert_eq!(plan.local_distributions, vec![vec![0.2, 0.8], vec![0.4, 0.6]]);
    // weight = mean local L / L_i
    assert_eq!(plan.scales, vec![vec![2.5, 2.5 / 4.0], vec![1.25, 2.5 / 3.0]]);

    let capped = IsAsgdPlan::new(vec![1.0, 2.0, 3.0, 4.0], plan.ordering.clone(), 2, Some(1.0)).unwrap();
    assert_eq!(capped.scales, vec![vec![1.0, 2.5 / 4.0], vec![1.0, 2.5 / 3.0]]);
}

/// Reusing one drawn sequence per epoch only ever visits the samples drawn
/// in the first epoch.
#[test]
fn reused_sequence_keeps_its_first_draw() {
    let ds = synthetic::separable(100, 30, 4, 21);
    let obj = Objective::squared_hinge(0.01).unwrap();
    let visited = |mode| {
        let cfg = SolverConfig { record_samples: true, sequence_mode: mode, ..config(Algorithm::IsAsgd, 0.1, 6, 1, 5) };
        let log = train(&cfg, &ds, &obj).unwrap().sample_log.unwrap();
        let first: std::collections::BTreeSet<usize> = log[..100].iter().map(|e| e.sample).collect();
        let all: std::collections::BTreeSet<usize> = log.iter().map(|e| e.sample).collect();
        (first, all)
    };
    let (first, all) = visited(SequenceMode::ShuffleReuse);
    assert_eq!(first, all);
    assert!(all.len() < 100);
    let (first, all) = visited(SequenceMode::Regenerate);
    assert!(all.len() > first.len());
}

#[test]
fn nonpositive_importance_is_rejected_before_training() {
    let ordering = SampleOrdering { order: vec![0, 1], balanced: false, gate_fired: false };
    assert!(IsAsgdPlan::new(vec![1.0, 0.0], ordering, 1, None).is_err());
}

#[test]
fn equal_importance_reduces_to_asgd() {
    let ds = synthetic::separable(2000, 200, 5, 9);
    let obj = Objective::squared_hinge(0.01).unwrap();
    let n = ds.len();
    let ordering = SampleOrdering { order: (0..n).collect(), balanced: false, gate_fired: false };
    let plan = IsAsgdPlan::new(vec![0.7; n], ordering, 2, None).unwrap();
    for (dist, scales) in plan.local_distributions.iter().zip(&plan.scales) {
        assert!(scales.iter().all(|&s| s == 1.0));
        assert!(dist.iter().all(|&p| p == 1.0 / dist.len() as f64));
    }

    // each seed partitions the same shuffle ASGD uses, so only the sampling differs
    let (mut is_rmse, mut asgd_rmse) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let cfg = SolverConfig { sequence_mode: SequenceMode::Regenerate, ..config(Algorithm::IsAsgd, 0.1, 5, 2, seed) };
        let ordering = SampleOrdering { order: random_shuffle(n, seed), balanced: false, gate_fired: false };
        let plan = IsAsgdPlan::new(vec![0.7; n], ordering, 2, None).unwrap();
        let is = run_is_asgd_with(&cfg, &ds, &obj, plan).unwrap();
        let asgd = train(&SolverConfig { algorithm: Algorithm::Asgd, ..cfg }, &ds, &obj).unwrap();
        is_rmse.push(is.trace.last().unwrap().rmse);
        asgd_rmse.push(asgd.trace.last().unwrap().rmse);
    }
    let (a, b) = (median(is_rmse), median(asgd_rmse));
    assert!((a - b).abs() <= 0.05 * b, "median rmse {a} vs {b}");
}

#[test]
fn single_worker_asgd_behaves_like_sgd() {
    let ds = synthetic::random_sparse(150, 40, 6, 10);
    let obj = Objective::logistic(0.001).unwrap();
    let final_rmse = |algorithm| {
        median((0..10).map(|seed| train(&config(algorithm, 0.2, 5, 1, seed), &ds, &obj).unwrap().trace.last().unwrap().rmse).collect())
    };
    let (sgd, asgd) = (final_rmse(Algorithm::Sgd), final_rmse(Algorithm::Asgd));
    assert!((sgd - asgd).abs() <= 0.05 * sgd, "{sgd} vs {asgd}");
}

#[test]
fn svrg_direction_is_mu_at_snapshot() {
    let ds = synthetic::random_sparse(25, 12, 4, 13);
    let obj = Objective::squared_hinge(0.3).unwrap();
    let s: Vec<f64> = (0..12).map(|j| (j as f64 - 6.0) / 10.0).collect();
    let state = SvrgState::capture(&obj, &ds, &s, 3);
    for i in 0..ds.len() {
        assert_eq!(svrg_direction(&obj, &ds, i, &s, &state), state.mu);
    }
}

#[test]
fn svrg_reduces_variance_near_snapshot() {
    let ds = synthetic::random_sparse(40, 15, 5, 14);
    let obj = Objective::logistic(0.05).unwrap();
    let s: Vec<f64> = (0..15).map(|j| ((j * 7) % 5) as f64 / 5.0 - 0.4).collect();
    let state = SvrgState::capture(&obj, &ds, &s, 2);
    let w: Vec<f64> = s.iter().enumerate().map(|(j, v)| v + 1e-3 * ((j % 3) as f64 - 1.0)).collect();
    let variance = |vs: Vec<Vec<f64>>| {
        let n = vs.len() as f64;
        let mean: Vec<f64> = (0..15).map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / n).collect();
        vs.iter().map(|v| v.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>()).sum::<f64>() / n
    };
    let reduced = variance((0..40).map(|i| svrg_direction(&obj, &ds, i, &w, &state)).collect());
    let plain = variance((0..40).map(|i| obj.grad(&ds, i, &w).unwrap().to_dense(15)).collect());
    assert!(reduced < plain, "{reduced} >= {plain}");
}

#[test]
fn svrg_snapshots_carry_full_gradient() {
    let ds = synthetic::random_sparse(60, 20, 5, 15);
    let obj = Objective::squared_hinge(0.1).unwrap();
    let cfg = SolverConfig { record_snapshots: true, svrg_sync_period: Some(25), ..config(Algorithm::SvrgAsgd, 0.05, 2, 2, 3) };
    let out = train(&cfg, &ds, &obj).unwrap();
    // snapshots at global iterations 0, 25, 50, 75 and 100
    assert_eq!(out.snapshots.len(), 5);
    assert!(out.snapshots.iter().skip(1).any(|s| s.snapshot.iter().any(|&v| v != 0.0)));
    for state in &out.snapshots {
        let full = obj.full_gradient(&ds, &state.snapshot).unwrap();
        for (m, f) in state.mu.iter().zip(&full) {
            assert!((m - f).abs() <= 1e-12);
        }
    }
}

#[test]
fn svrg_on_one_sample_matches_sgd() {
    let ds = SparseDataset::from_rows(vec![vec![(0, 0.8), (1, -0.3), (3, 0.5)]], vec![-1.0], None).unwrap();
    let obj = Objective::squared_hinge(0.2).unwrap();
    let sgd = train(&config(Algorithm::Sgd, 0.1, 6, 1, 0), &ds, &obj).unwrap();
    let svrg = train(&config(Algorithm::SvrgAsgd, 0.1, 6, 1, 0), &ds, &obj).unwrap();
    assert_eq!(sgd.weights, svrg.weights);
    let metrics = |t: &ConvergenceTrace| t.records.iter().map(|r| (r.rmse, r.error_rate)).collect::<Vec<_>>();
    assert_eq!(metrics(&sgd.trace), metrics(&svrg.trace));
}

#[test]
fn svrg_touches_every_coordinate() {
    let ds = synthetic::separable(100, 500, 5, 16);
    let obj = Objective::squared_hinge(0.01).unwrap();
    let asgd = train(&config(Algorithm::Asgd, 0.1, 2, 2, 1), &ds, &obj).unwrap();
    let svrg = train(&config(Algorithm::SvrgAsgd, 0.1, 2, 2, 1), &ds, &obj).unwrap();
    assert_eq!(asgd.trace.last().unwrap().touched_coords_per_iter, 5.0);
    assert_eq!(svrg.trace.last().unwrap().touched_coords_per_iter, 500.0);
    assert_eq!(asgd.trace.records[0].touched_coords_per_iter, 0.0);
}

#[test]
fn worker_panic_is_reported() {
    let ds = synthetic::random_sparse(40, 10, 3, 17);
    let obj = Objective::logistic(0.0).unwrap();
    for algorithm in [Algorithm::Asgd, Algorithm::IsAsgd, Algorithm::SvrgAsgd] {
        let cfg = SolverConfig { fail_worker_at_epoch: Some(2), ..config(algorithm, 0.1, 4, 3, 0) };
        match train(&cfg, &ds, &obj) {
            Err(SolverError::WorkerPanic { thread_id, message }) => {
                assert_eq!(thread_id, 0);
                assert!(message.contains("epoch 2"));
            }
            other => panic!("{algorithm}: expected a worker panic, got {other:?}"),
        }
    }
}

#[test]
fn compare_exchange_mode_converges() {
    let ds = synthetic::separable(300, 40, 6, 18);
    let obj = Objective::squared_hinge(1e-4).unwrap();
    let cfg = SolverConfig { update_mode: UpdateMode::CompareExchange, ..config(Algorithm::Asgd, 0.5, 30, 4, 2) };
    let out = train(&cfg, &ds, &obj).unwrap();
    assert_eq!(out.trace.best_error_rate(), Some(0.0));
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let ds = synthetic::random_sparse(5, 10, 3, 19);
    let obj = Objective::logistic(0.0).unwrap();
    let err = train(&config(Algorithm::Asgd, 0.1, 1, 6, 0), &ds, &obj).unwrap_err();
    assert!(matches!(err, SolverError::Config(_)));
}

/// Constant-step SGD stalls at a noise floor where the RMSE jitters, so
/// monotone progress over ten epochs needs a step well below `1 / max L`.
#[test]
fn small_steps_make_steady_progress() {
    let ds = synthetic::random_sparse(200, 60, 6, 20);
    for eta in [0.1, 0.5, 1.0] {
        let obj = Objective::squared_hinge(eta).unwrap();
        let max_l = obj.lipschitz_bounds(&ds).unwrap().into_iter().fold(0.0, f64::max);
        for seed in 0..10 {
            let out = train(&config(Algorithm::Sgd, 0.02 / max_l, 10, 1, seed), &ds, &obj).unwrap();
            let rmse: Vec<f64> = out.trace.records.iter().map(|r| r.rmse).collect();
            for pair in rmse.windows(2) {
                assert!(pair[1] <= pair[0], "eta {eta} seed {seed}: rmse rose: {rmse:?}");
            }
        }
    }
}
