//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use isasgd::data::{estimate_conflict_degree, partition_contiguous};
use isasgd::importance::{
    importance_balance, optimal_distribution_oracle, partition_importance_sums, psi, rho, sampling_distribution,
};
use isasgd::metrics::ConvergenceTrace;
use isasgd::solvers::{replay_log, Algorithm, SequenceMode};
use isasgd::{synthetic, train, ImportanceProfile, Objective, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[m - 1] + xs[m]) / 2.0
    } else {
        xs[m]
    }
}

fn exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for instance in 0..20u64 {
        let ds = synthetic::random_sparse(15, 10, 4, 300 + instance);
        let obj = if instance % 2 == 0 { Objective::squared_hinge(0.3) } else { Objective::logistic(0.1) }.unwrap();
        let w = common::random_point(&mut ChaCha8Rng::seed_from_u64(instance), ds.dim(), 2.0);
        let p = sampling_distribution(&obj.lipschitz_bounds(&ds).unwrap()).unwrap();
        worst = worst.max(common::unbiasedness_gap(&ds, &obj, &w, &p));
    }
    let l = [1.0, 2.0, 3.0, 4.0];
    let hand = [
        sampling_distribution(&l).unwrap() == vec![0.1, 0.2, 0.3, 0.4],
        sampling_distribution(&[1.0, 2.0]).unwrap() == vec![1.0 / 3.0, 2.0 / 3.0],
        sampling_distribution(&[0.7; 5]).unwrap() == vec![0.2; 5],
        psi(&l).unwrap() == 100.0 / 30.0,
        psi(&[0.7; 9]).unwrap() == 9.0,
        (rho(&l).unwrap() - 0.2).abs() <= 1e-15,
        rho(&[0.7; 9]).unwrap() == 0.0,
    ];
    let matched = hand.iter().filter(|&&h| h).count();
    check(
        worst <= 1e-10 && matched == hand.len(),
        format!("max unbiasedness gap {worst:.2e} over 20 pairs; {matched}/{} hand examples", hand.len()),
    )
}

fn variance_oracle() -> Outcome {
    let mut violations = 0;
    for instance in 0..5u64 {
        let ds = synthetic::random_sparse(20, 12, 5, 100 + instance);
        for obj in [Objective::squared_hinge(0.1).unwrap(), Objective::logistic(0.05).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(instance);
            let w = common::random_point(&mut rng, ds.dim(), 1.0);
            let grads = common::dense_grads(&ds, &obj, &w);
            let best = common::exact_variance(&grads, &optimal_distribution_oracle(&ds, &obj, &w).unwrap());
            let mut rivals = vec![vec![1.0 / 20.0; 20]];
            rivals.extend((0..1000).map(|_| common::random_distribution(&mut rng, 20)));
            violations += rivals.iter().filter(|p| common::exact_variance(&grads, p) * (1.0 + 1e-12) < best).count();
        }
    }
    check(violations == 0, format!("{violations} rival distributions beat the oracle on 5 instances x 2 objectives"))
}

fn four_sample_balance() -> Outcome {
    let l = [1.0, 2.0, 3.0, 4.0];
    let order = importance_balance(&l);
    let parts = partition_contiguous(&order, 2).unwrap();
    let balanced = partition_importance_sums(&l, &parts, &order).unwrap().phi;
    let plain: Vec<usize> = (0..4).collect();
    let unbalanced = partition_importance_sums(&l, &partition_contiguous(&plain, 2).unwrap(), &plain).unwrap().phi;
    check(
        balanced == vec![5.0, 5.0] && unbalanced == vec![3.0, 7.0],
        format!("balanced order {order:?} -> {balanced:?}, unshuffled -> {unbalanced:?}"),
    )
}

fn gradient_checks() -> Outcome {
    let hinge = common::finite_difference_error(&Objective::squared_hinge(0.3).unwrap(), 1);
    let logistic = common::finite_difference_error(&Objective::logistic(0.2).unwrap(), 2);
    check(
        hinge < 1e-5 && logistic < 1e-5,
        format!("worst relative error: squared hinge {hinge:.2e}, logistic {logistic:.2e}"),
    )
}

fn separable_config(algorithm: Algorithm, num_threads: usize, seed: u64, sequence_mode: SequenceMode) -> SolverConfig {
    SolverConfig { algorithm, step_size: 0.5, epochs: 50, num_threads, seed, sequence_mode, ..SolverConfig::default() }
}

fn convergence() -> Outcome {
    let ds = synthetic::separable(2000, 100, 10, 1);
    let obj = Objective::squared_hinge(1e-4).unwrap();
    let mut summary = Vec::new();
    let mut ok = true;
    for algorithm in [Algorithm::Sgd, Algorithm::Asgd, Algorithm::IsAsgd, Algorithm::SvrgAsgd] {
        for num_threads in [1, 4] {
            let hits = (0..10)
                .filter(|&seed| {
                    let cfg = separable_config(algorithm, num_threads, seed, SequenceMode::Regenerate);
                    train(&cfg, &ds, &obj).unwrap().trace.best_error_rate() == Some(0.0)
                })
                .count();
            ok &= hits >= 9;
            summary.push(format!("{algorithm}/T{num_threads} {hits}/10"));
        }
    }
    let reuse_hits = (0..10)
        .filter(|&seed| {
            let cfg = separable_config(Algorithm::IsAsgd, 4, seed, SequenceMode::ShuffleReuse);
            train(&cfg, &ds, &obj).unwrap().trace.best_error_rate() == Some(0.0)
        })
        .count();
    println!("      info: is-asgd/T4 with a reused (reshuffled) sequence reaches zero error in {reuse_hits}/10 seeds");
    check(ok, summary.join(", "))
}

fn time_per_epoch(trace: &ConvergenceTrace) -> f64 {
    let last = trace.last().unwrap();
    last.wall_clock_s / last.epoch as f64
}

const SKEWED_N: usize = 100_000;
const RMSE_THRESHOLD: f64 = 0.955;

fn skewed_instance() -> (isasgd::SparseDataset, Objective) {
    let ds = synthetic::skewed(SKEWED_N, SKEWED_N, 10, 0.1, 0.01, 0.0, 1);
    (ds, Objective::squared_hinge(1e-4).unwrap())
}

fn importance_acceleration() -> Outcome {
    let (ds, obj) = skewed_instance();
    let psi_over_n = ImportanceProfile::from_objective(&obj, &ds).unwrap().psi_over_n();
    let epochs = 10;
    let (mut is_epochs, mut asgd_epochs, mut is_time, mut asgd_time) = (vec![], vec![], vec![], vec![]);
    for seed in 0..10 {
        for (algorithm, reached, time) in
            [(Algorithm::IsAsgd, &mut is_epochs, &mut is_time), (Algorithm::Asgd, &mut asgd_epochs, &mut asgd_time)]
        {
            let cfg = SolverConfig { algorithm, step_size: 0.5, epochs, num_threads: 4, seed, ..SolverConfig::default() };
            let trace = train(&cfg, &ds, &obj).unwrap().trace;
            reached.push(trace.epochs_to_rmse(RMSE_THRESHOLD).unwrap_or(epochs + 1) as f64);
            time.push(time_per_epoch(&trace));
        }
    }
    let (is_e, asgd_e) = (median(is_epochs), median(asgd_epochs));
    let (is_t, asgd_t) = (median(is_time), median(asgd_time));
    check(
        psi_over_n <= 0.3 && is_e <= asgd_e && is_t <= 1.1 * asgd_t,
        format!(
            "psi/n {psi_over_n:.3}; median epochs to rmse {RMSE_THRESHOLD}: is-asgd {is_e} vs asgd {asgd_e}; \
             median s/epoch {is_t:.4} vs {asgd_t:.4}"
        ),
    )
}

fn svrg_cost() -> Outcome {
    let (ds, obj) = skewed_instance();
    let epochs = 2;
    let run = |algorithm| {
        let cfg = SolverConfig { algorithm, step_size: 0.5, epochs, num_threads: 1, seed: 0, ..SolverConfig::default() };
        train(&cfg, &ds, &obj).unwrap().trace
    };
    let (svrg, asgd) = (run(Algorithm::SvrgAsgd), run(Algorithm::Asgd));
    let touched = |t: &ConvergenceTrace| t.last().unwrap().touched_coords_per_iter;
    let ratio = touched(&svrg) / touched(&asgd);
    let decrease = |t: &ConvergenceTrace| (t.records[0].rmse - t.last().unwrap().rmse) / epochs as f64;
    let (svrg_d, asgd_d) = (decrease(&svrg), decrease(&asgd));
    check(
        ratio >= 1e3 && svrg_d >= asgd_d,
        format!(
            "touched/iter ratio {ratio:.0}; rmse decrease per epoch svrg-asgd {svrg_d:.4} vs asgd {asgd_d:.4}; \
             s/epoch {:.2} vs {:.4}",
            time_per_epoch(&svrg),
            time_per_epoch(&asgd)
        ),
    )
}

fn serializability() -> Outcome {
    let ds = synthetic::disjoint(500, 4, 3);
    let obj = Objective::squared_hinge(0.1).unwrap();
    let cfg = SolverConfig {
        algorithm: Algorithm::Asgd,
        step_size: 0.3,
        epochs: 5,
        num_threads: 2,
        seed: 9,
        record_samples: true,
        ..SolverConfig::default()
    };
    let out = train(&cfg, &ds, &obj).unwrap();
    let log = out.sample_log.unwrap();
    let replayed = replay_log(&ds, &obj, cfg.step_size, &log);
    let mismatched = replayed.iter().zip(&out.weights).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    check(mismatched == 0, format!("{} logged updates, {mismatched} coordinates differ from the serial replay", log.len()))
}

fn conflict_degree() -> Outcome {
    let mut mismatches = 0;
    for k in 0..10u64 {
        let n = 5 + 5 * k as usize;
        let ds = synthetic::random_sparse(n, 10 + 7 * k as usize, 4, 40 + k);
        let exhaustive = estimate_conflict_degree(&ds, (n * (n - 1)) as u64, k).unwrap();
        if exhaustive != common::conflict_graph_degree(&ds) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches}/10 datasets (n = 5..=50) differ from the explicit graph"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("exactness suite", exactness),
        ("variance-optimal distribution oracle", variance_oracle),
        ("four-sample importance balancing", four_sample_balance),
        ("finite-difference gradient checks", gradient_checks),
        ("convergence on separable data", convergence),
        ("importance sampling acceleration", importance_acceleration),
        ("svrg cost structure", svrg_cost),
        ("serializability on disjoint supports", serializability),
        ("conflict-degree oracle", conflict_degree),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1}s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1}s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
