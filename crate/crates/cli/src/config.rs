//! Line-oriented `key = value` experiment configs.
//!
//! ```text
//! # squared hinge on a LibSVM file
//! dataset = data/train.svm
//! objective = squared_hinge_l2
//! eta = 1e-4
//! algorithm = is-asgd, asgd
//! num_T = 1, 4
//! ```
//!
//! The sweep keys (`algorithm`, `num_T`, `step_size`, `seed`) accept
//! comma-separated lists; `train` requires a single value for each.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use isasgd::importance::BalanceMode;
use isasgd::solvers::{Algorithm, SequenceMode, UpdateMode};
use isasgd::{Family, Objective, RmseMode, SolverConfig};

use crate::CliError;

const KEYS: &[&str] = &[
    "dataset",
    "dim",
    "objective",
    "eta",
    "algorithm",
    "step_size",
    "epochs",
    "num_T",
    "seed",
    "zeta",
    "balance_mode",
    "svrg_sync_period",
    "is_weight_cap",
    "update_mode",
    "sequence_mode",
    "rmse",
    "prepared",
    "prepare_threads",
    "fail_worker_at_epoch",
];

/// One training cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub num_threads: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Cell {
    /// Directory-safe name unique to the parameter tuple.
    pub fn name(&self) -> String {
        format!("{}_T{}_step{}_seed{}", self.algorithm, self.num_threads, self.step_size, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub dim: Option<usize>,
    pub objective: Objective,
    pub algorithms: Vec<Algorithm>,
    pub threads: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub seeds: Vec<u64>,
    pub prepared: Option<PathBuf>,
    pub prepare_threads: Option<Vec<usize>>,
    /// Settings shared by every cell; the cell fields are overwritten per run.
    pub base: SolverConfig,
}

fn config_err(key: &str, message: impl Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

fn parse_one<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    raw.parse().map_err(|e| config_err(key, format!("cannot parse {raw:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    let items: Vec<T> = raw.split(',').map(|s| parse_one(key, s.trim())).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(config_err(key, "empty list"));
    }
    Ok(items)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut pairs = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", k + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("line {}: unknown key `{key}`", k + 1)));
        }
        if pairs.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{key}`", k + 1)));
        }
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_str_with_base(&text, path.parent())
    }

    /// Parses config text; relative `dataset` and `prepared` paths resolve
    /// against `base_dir` when given.
    pub fn from_str_with_base(text: &str, base_dir: Option<&Path>) -> Result<Self, CliError> {
        let pairs = parse_pairs(text)?;
        let get = |key: &str| pairs.get(key).map(String::as_str);
        let resolve = |p: &str| match base_dir {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        };

        let dataset = get("dataset").map(resolve).ok_or_else(|| config_err("dataset", "missing"))?;
        let family: Family = get("objective").map_or(Ok(Family::SquaredHingeL2), |v| parse_one("objective", v))?;
        let eta: f64 = get("eta").map_or(Ok(1e-4), |v| parse_one("eta", v))?;
        let objective = Objective::new(family, eta).map_err(|e| config_err("eta", e))?;

        let mut base = SolverConfig::default();
        if let Some(v) = get("epochs") {
            base.epochs = parse_one("epochs", v)?;
        }
        if let Some(v) = get("zeta") {
            base.zeta = parse_one("zeta", v)?;
        }
        if let Some(v) = get("balance_mode") {
            base.balance_mode = parse_one::<BalanceMode>("balance_mode", v)?;
        }
        if let Some(v) = get("svrg_sync_period") {
            base.svrg_sync_period = Some(parse_one("svrg_sync_period", v)?);
        }
        if let Some(v) = get("is_weight_cap") {
            base.is_weight_cap = Some(parse_one("is_weight_cap", v)?);
        }
        if let Some(v) = get("update_mode") {
            base.update_mode = parse_one::<UpdateMode>("update_mode", v)?;
        }
        if let Some(v) = get("sequence_mode") {
            base.sequence_mode = parse_one::<SequenceMode>("sequence_mode", v)?;
        }
        if let Some(v) = get("rmse") {
            base.rmse_mode = parse_one::<RmseMode>("rmse", v)?;
        }
        if let Some(v) = get("fail_worker_at_epoch") {
            base.fail_worker_at_epoch = Some(parse_one("fail_worker_at_epoch", v)?);
        }

        Ok(ExperimentConfig {
            dataset,
            dim: get("dim").map(|v| parse_one("dim", v)).transpose()?,
            objective,
            algorithms: get("algorithm").map_or(Ok(vec![Algorithm::IsAsgd]), |v| parse_list("algorithm", v))?,
            threads: get("num_T").map_or(Ok(vec![1]), |v| parse_list("num_T", v))?,
            step_sizes: get("step_size").map_or(Ok(vec![base.step_size]), |v| parse_list("step_size", v))?,
            seeds: get("seed").map_or(Ok(vec![0]), |v| parse_list("seed", v))?,
            prepared: get("prepared").map(resolve),
            prepare_threads: get("prepare_threads").map(|v| parse_list("prepare_threads", v)).transpose()?,
            base,
        })
    }

    /// Every combination of the list-valued keys, in a fixed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &num_threads in &self.threads {
                for &step_size in &self.step_sizes {
                    for &seed in &self.seeds {
                        cells.push(Cell { algorithm, num_threads, step_size, seed });
                    }
                }
            }
        }
        cells
    }

    /// The single cell of a `train` run.
    pub fn single_cell(&self) -> Result<Cell, CliError> {
        let single = |key: &str, len: usize| {
            if len == 1 {
                Ok(())
            } else {
                Err(config_err(key, "train takes a single value; use `sweep` for lists"))
            }
        };
        single("algorithm", self.algorithms.len())?;
        single("num_T", self.threads.len())?;
        single("step_size", self.step_sizes.len())?;
        single("seed", self.seeds.len())?;
        Ok(self.cells().remove(0))
    }

    pub fn solver_config(&self, cell: &Cell) -> SolverConfig {
        SolverConfig {
            algorithm: cell.algorithm,
            num_threads: cell.num_threads,
            step_size: cell.step_size,
            seed: cell.seed,
            ..self.base.clone()
        }
    }
}
