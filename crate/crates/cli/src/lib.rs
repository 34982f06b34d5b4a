//! Command implementations behind the `isasgd` binary.
//!
//! Every command reads an [`ExperimentConfig`], applies command-line
//! overrides, and writes plain-text artifacts into an output directory:
//!
//! * `prepare`: `importance.csv`, `summary.csv`, `order.txt` and one
//!   `phi_T{t}.csv` per requested thread count,
//! * `train`: `trace.csv` and `model.txt`,
//! * `sweep`: one `train` output directory per cell plus `sweep.csv`,
//! * `speedup`: `speedup.csv`.

pub mod config;

use std::fmt::{self, Display};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use isasgd::data::{load_libsvm, partition_contiguous, read_cache, DataError};
use isasgd::importance::{choose_ordering, partition_importance_sums, BalanceMode, ImportanceProfile, SampleOrdering};
use isasgd::metrics::{speedup_slices, MetricsError, SpeedupReport};
use isasgd::solvers::{run_is_asgd_with, Algorithm, IsAsgdPlan, SolverError};
use isasgd::{train, ConvergenceTrace, RmseMode, RunOutcome, SparseDataset};
use thiserror::Error;

pub use config::{Cell, ExperimentConfig};

/// Error-rate levels used by `speedup` when none are given.
pub const DEFAULT_LEVELS: &[f64] = &[0.3, 0.2, 0.15, 0.1, 0.05, 0.02, 0.01, 0.0];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit status: 1 usage/config, 2 data, 3 runtime.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(err: SolverError) -> Self {
        match err {
            SolverError::Config(e) => CliError::Config(e.to_string()),
            SolverError::Data(e) => CliError::Data(e.to_string()),
            SolverError::Importance(e) => CliError::Data(e.to_string()),
            e @ SolverError::WorkerPanic { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn data_err(path: &Path) -> impl FnOnce(DataError) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn metrics_err(path: &Path) -> impl FnOnce(MetricsError) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Command-line flags that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub balance: Option<BalanceMode>,
    pub rmse: Option<RmseMode>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(threads) = self.threads {
            cfg.threads = vec![threads];
            cfg.prepare_threads = None;
        }
        if let Some(balance) = self.balance {
            cfg.base.balance_mode = balance;
        }
        if let Some(rmse) = self.rmse {
            cfg.base.rmse_mode = rmse;
        }
    }
}

/// Loads LibSVM text, or the binary cache when the file ends in `.bin`.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<SparseDataset, CliError> {
    let path = &cfg.dataset;
    let ds = if path.extension().is_some_and(|e| e == "bin") {
        let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        read_cache(BufReader::new(file))
    } else {
        load_libsvm(path, cfg.dim)
    };
    let ds = ds.map_err(data_err(path))?;
    if let Some(dim) = cfg.dim {
        if ds.dim() != dim {
            return Err(CliError::Data(format!("{}: dimension {} but config says dim = {dim}", path.display(), ds.dim())));
        }
    }
    Ok(ds)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(write_err(path))?))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(write_err(dir))
}

fn single_seed(cfg: &ExperimentConfig) -> Result<u64, CliError> {
    match cfg.seeds.as_slice() {
        [seed] => Ok(*seed),
        _ => Err(CliError::Config("seed: this command takes a single value".into())),
    }
}

/// What `prepare` computed, for the terminal summary.
#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub n: usize,
    pub psi: f64,
    pub psi_over_n: f64,
    pub rho: f64,
    pub zeta: f64,
    pub ordering: SampleOrdering,
    pub phi: Vec<(usize, Vec<f64>)>,
}

impl Display for PrepareSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, psi = {}, psi/n = {:.6}, rho = {}, zeta = {}", self.n, self.psi, self.psi_over_n, self.rho, self.zeta)?;
        writeln!(
            f,
            "gate rho <= zeta: {}; ordering: {}",
            if self.ordering.gate_fired { "fired" } else { "not fired" },
            if self.ordering.balanced { "importance balanced" } else { "random shuffle" }
        )?;
        for (t, phi) in &self.phi {
            let cells: Vec<String> = phi.iter().map(|p| p.to_string()).collect();
            writeln!(f, "phi[num_T={t}]: {}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Computes importances, the gated ordering and per-thread-count Φ tables.
pub fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<PrepareSummary, CliError> {
    let seed = single_seed(cfg)?;
    let ds = load_dataset(cfg)?;
    let lipschitz = cfg.objective.lipschitz_bounds(&ds).map_err(|e| CliError::Data(e.to_string()))?;
    let profile = ImportanceProfile::new(lipschitz).map_err(|e| CliError::Data(e.to_string()))?;
    let (zeta, mode) = (cfg.base.zeta, cfg.base.balance_mode);
    let ordering = choose_ordering(profile.lipschitz(), mode, zeta, seed).map_err(|e| CliError::Data(e.to_string()))?;

    let thread_counts = cfg.prepare_threads.clone().unwrap_or_else(|| cfg.threads.clone());
    let mut phi = Vec::new();
    for &t in &thread_counts {
        if t == 0 || t > ds.len() {
            return Err(CliError::Config(format!("prepare_threads: {t} is not in 1..={}", ds.len())));
        }
        let parts = partition_contiguous(&ordering.order, t).map_err(|e| CliError::Config(e.to_string()))?;
        let sums = partition_importance_sums(profile.lipschitz(), &parts, &ordering.order)
            .map_err(|e| CliError::Data(e.to_string()))?;
        phi.push((t, parts, sums.phi));
    }

    ensure_dir(out)?;
    let path = out.join("importance.csv");
    let mut w = create(&path)?;
    let mut body = || -> io::Result<()> {
        writeln!(w, "index,L")?;
        for (i, l) in profile.lipschitz().iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()
    };
    body().map_err(write_err(&path))?;

    let path = out.join("summary.csv");
    let text = format!(
        "n,psi,psi_over_n,rho,zeta,gate_fired,balanced,seed\n{},{},{},{},{},{},{},{seed}\n",
        ds.len(),
        profile.psi(),
        profile.psi_over_n(),
        profile.rho(),
        zeta,
        ordering.gate_fired,
        ordering.balanced
    );
    fs::write(&path, text).map_err(write_err(&path))?;

    let path = out.join("order.txt");
    let text: String = ordering.order.iter().map(|i| format!("{i}\n")).collect();
    fs::write(&path, text).map_err(write_err(&path))?;

    for (t, parts, sums) in &phi {
        let path = out.join(format!("phi_T{t}.csv"));
        let mut text = String::from("partition,lo,hi,phi\n");
        for (p, s) in parts.iter().zip(sums) {
            text.push_str(&format!("{},{},{},{s}\n", p.thread_id, p.lo, p.hi));
        }
        fs::write(&path, text).map_err(write_err(&path))?;
    }

    Ok(PrepareSummary {
        n: ds.len(),
        psi: profile.psi(),
        psi_over_n: profile.psi_over_n(),
        rho: profile.rho(),
        zeta,
        ordering,
        phi: phi.into_iter().map(|(t, _, s)| (t, s)).collect(),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    BufReader::new(file).lines().collect::<io::Result<_>>().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn bad_artifact(path: &Path, line: usize, what: &str) -> CliError {
    CliError::Data(format!("{}: line {line}: {what}", path.display()))
}

/// Reads `importance.csv`, `order.txt` and `summary.csv` written by [`prepare`].
pub fn load_prepared(dir: &Path) -> Result<(Vec<f64>, SampleOrdering), CliError> {
    let path = dir.join("importance.csv");
    let lines = read_lines(&path)?;
    if lines.first().map(String::as_str) != Some("index,L") {
        return Err(bad_artifact(&path, 1, "expected header `index,L`"));
    }
    let mut lipschitz = Vec::with_capacity(lines.len() - 1);
    for (k, line) in lines.iter().enumerate().skip(1) {
        let (idx, l) = line.split_once(',').ok_or_else(|| bad_artifact(&path, k + 1, "expected `index,L`"))?;
        if idx.parse::<usize>().ok() != Some(k - 1) {
            return Err(bad_artifact(&path, k + 1, "indices must be 0, 1, 2, ..."));
        }
        lipschitz.push(l.parse::<f64>().map_err(|_| bad_artifact(&path, k + 1, "invalid L"))?);
    }

    let path = dir.join("order.txt");
    let order = read_lines(&path)?
        .iter()
        .enumerate()
        .map(|(k, l)| l.trim().parse::<usize>().map_err(|_| bad_artifact(&path, k + 1, "invalid index")))
        .collect::<Result<Vec<_>, _>>()?;

    let path = dir.join("summary.csv");
    let lines = read_lines(&path)?;
    let header: Vec<&str> = lines.first().map(|l| l.split(',').collect()).unwrap_or_default();
    let values: Vec<&str> = lines.get(1).map(|l| l.split(',').collect()).unwrap_or_default();
    let flag = |name: &str| -> Result<bool, CliError> {
        let pos = header.iter().position(|h| *h == name).ok_or_else(|| bad_artifact(&path, 1, &format!("missing column `{name}`")))?;
        values.get(pos).and_then(|v| v.parse().ok()).ok_or_else(|| bad_artifact(&path, 2, &format!("invalid `{name}`")))
    };
    let ordering = SampleOrdering { order, balanced: flag("balanced")?, gate_fired: flag("gate_fired")? };
    Ok((lipschitz, ordering))
}

/// Runs one cell. IS-ASGD uses the prepared artifacts when `prepared` is set.
pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell, ds: &SparseDataset) -> Result<RunOutcome, CliError> {
    let solver = cfg.solver_config(cell);
    match (&cfg.prepared, cell.algorithm) {
        (Some(dir), Algorithm::IsAsgd) => {
            solver.validate(ds.len()).map_err(|e| CliError::Config(e.to_string()))?;
            let (lipschitz, ordering) = load_prepared(dir)?;
            if lipschitz.len() != ds.len() {
                return Err(CliError::Data(format!(
                    "{}: prepared for {} samples but the dataset has {}",
                    dir.display(),
                    lipschitz.len(),
                    ds.len()
                )));
            }
            let plan = IsAsgdPlan::new(lipschitz, ordering, solver.num_threads, solver.is_weight_cap)?;
            Ok(run_is_asgd_with(&solver, ds, &cfg.objective, plan)?)
        }
        _ => Ok(train(&solver, ds, &cfg.objective)?),
    }
}

/// Writes nonzero coordinates as `index value` lines under a `# dim` header.
pub fn write_model(weights: &[f64], path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut body = || -> io::Result<()> {
        writeln!(w, "# dim {}", weights.len())?;
        for (j, v) in weights.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "{j} {v}")?;
        }
        w.flush()
    };
    body().map_err(write_err(path))
}

/// Reads a model written by [`write_model`] back into a dense vector.
pub fn read_model(path: &Path) -> Result<Vec<f64>, CliError> {
    let lines = read_lines(path)?;
    let dim = lines
        .first()
        .and_then(|l| l.strip_prefix("# dim "))
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| bad_artifact(path, 1, "expected `# dim <d>`"))?;
    let mut w = vec![0.0; dim];
    for (k, line) in lines.iter().enumerate().skip(1) {
        let (j, v) = line.split_once(' ').ok_or_else(|| bad_artifact(path, k + 1, "expected `index value`"))?;
        let j: usize = j.parse().ok().filter(|&j| j < dim).ok_or_else(|| bad_artifact(path, k + 1, "invalid index"))?;
        w[j] = v.parse().map_err(|_| bad_artifact(path, k + 1, "invalid value"))?;
    }
    Ok(w)
}

fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let path = dir.join("trace.csv");
    let file = create(&path)?;
    outcome.trace.write_csv(file).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_model(&outcome.weights, &dir.join("model.txt"))
}

fn describe(trace: &ConvergenceTrace) -> String {
    let last = trace.last().expect("traces hold the epoch-0 record");
    format!(
        "{} T={} seed={}: {} epochs, rmse {:.6}, error rate {:.4} (best {:.4}), {:.3}s",
        trace.algorithm, trace.num_threads, trace.seed, last.epoch, last.rmse, last.error_rate, last.best_error_rate, last.wall_clock_s
    )
}

/// Trains the config's single cell and writes `trace.csv` and `model.txt`.
pub fn train_command(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let cell = cfg.single_cell()?;
    let ds = load_dataset(cfg)?;
    let outcome = run_cell(cfg, &cell, &ds)?;
    write_outputs(&outcome, out)?;
    Ok(describe(&outcome.trace))
}

/// Runs every cell of the cross-product into `out/<cell name>/` and
/// summarizes them in `out/sweep.csv`.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let ds = load_dataset(cfg)?;
    let cells = cfg.cells();
    for cell in &cells {
        cfg.solver_config(cell).validate(ds.len()).map_err(|e| CliError::Config(format!("cell {}: {e}", cell.name())))?;
    }
    ensure_dir(out)?;
    let mut summary = String::from("cell,algorithm,num_T,step_size,seed,epochs,rmse,error_rate,best_error_rate,wall_clock_s\n");
    let mut lines = Vec::new();
    for cell in &cells {
        let outcome = run_cell(cfg, cell, &ds)?;
        write_outputs(&outcome, &out.join(cell.name()))?;
        let last = outcome.trace.last().expect("traces hold the epoch-0 record");
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            cell.name(),
            cell.algorithm,
            cell.num_threads,
            cell.step_size,
            cell.seed,
            last.epoch,
            last.rmse,
            last.error_rate,
            last.best_error_rate,
            last.wall_clock_s
        ));
        let line = describe(&outcome.trace);
        log::info!("{line}");
        lines.push(line);
    }
    let path = out.join("sweep.csv");
    fs::write(&path, summary).map_err(write_err(&path))?;
    Ok(lines)
}

fn read_trace(path: &Path) -> Result<ConvergenceTrace, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let label = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let trace = ConvergenceTrace::read_csv(BufReader::new(file), label).map_err(metrics_err(path))?;
    trace.validate().map_err(metrics_err(path))?;
    Ok(trace)
}

/// Time-to-error-rate speedup of `trace_a` over `trace_b`
/// (`time_b / time_a` per level). Writes `out/speedup.csv` when `out` is set.
pub fn speedup(trace_a: &Path, trace_b: &Path, levels: &[f64], out: Option<&Path>) -> Result<SpeedupReport, CliError> {
    let (a, b) = (read_trace(trace_a)?, read_trace(trace_b)?);
    let report = speedup_slices(&a, &b, levels).map_err(|e| CliError::Config(format!("levels: {e}")))?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join("speedup.csv");
        report.write_csv(create(&path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}

/// Resolves the output directory for a command.
pub fn output_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("out"))
}

