use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::importance::{BalanceMode, DEFAULT_ZETA};
use crate::metrics::RmseMode;

use super::model::UpdateMode;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("unknown algorithm '{0}' (expected sgd, asgd, is-asgd or svrg-asgd)")]
    UnknownAlgorithm(String),
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sgd,
    Asgd,
    IsAsgd,
    SvrgAsgd,
}

impl FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "sgd" => Ok(Algorithm::Sgd),
            "asgd" => Ok(Algorithm::Asgd),
            "is-asgd" | "is_asgd" => Ok(Algorithm::IsAsgd),
            "svrg-asgd" | "svrg_asgd" => Ok(Algorithm::SvrgAsgd),
            other => Err(ConfigError::UnknownAlgorithm(other.to_string())),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Asgd => "asgd",
            Algorithm::IsAsgd => "is-asgd",
            Algorithm::SvrgAsgd => "svrg-asgd",
        })
    }
}

/// How IS-ASGD workers obtain a new sample sequence each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SequenceMode {
    /// Draw once, then reshuffle the same multiset every epoch.
    #[default]
    ShuffleReuse,
    /// Draw a fresh i.i.d. sequence every epoch.
    Regenerate,
}

impl FromStr for SequenceMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "shuffle" => Ok(SequenceMode::ShuffleReuse),
            "regenerate" => Ok(SequenceMode::Regenerate),
            other => Err(invalid("sequence_mode", format!("'{other}' (expected shuffle or regenerate)"))),
        }
    }
}

impl FromStr for UpdateMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "hogwild" => Ok(UpdateMode::Hogwild),
            "cas" => Ok(UpdateMode::CompareExchange),
            other => Err(invalid("update_mode", format!("'{other}' (expected hogwild or cas)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub step_size: f64,
    pub epochs: usize,
    /// Worker count; also the knob for the asynchrony delay.
    pub num_threads: usize,
    pub seed: u64,
    /// Threshold of the `rho <= zeta` balancing gate.
    pub zeta: f64,
    pub balance_mode: BalanceMode,
    /// Global iterations between SVRG snapshots; `None` means one pass (`n`).
    pub svrg_sync_period: Option<usize>,
    /// Upper bound on the importance weight `1/(n p_i)`.
    pub is_weight_cap: Option<f64>,
    pub update_mode: UpdateMode,
    pub sequence_mode: SequenceMode,
    pub rmse_mode: RmseMode,
    /// Log every update with a global ticket (slows the hot loop).
    pub record_samples: bool,
    /// Keep every SVRG snapshot and its full gradient in the outcome.
    pub record_snapshots: bool,
    #[doc(hidden)]
    pub fail_worker_at_epoch: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Asgd,
            step_size: 0.1,
            epochs: 10,
            num_threads: 1,
            seed: 0,
            zeta: DEFAULT_ZETA,
            balance_mode: BalanceMode::Auto,
            svrg_sync_period: None,
            is_weight_cap: None,
            update_mode: UpdateMode::Hogwild,
            sequence_mode: SequenceMode::ShuffleReuse,
            rmse_mode: RmseMode::PerSample,
            record_samples: false,
            record_snapshots: false,
            fail_worker_at_epoch: None,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        SolverConfig { algorithm, ..Default::default() }
    }

    /// Checks the configuration against a dataset of `n` samples.
    pub fn validate(&self, n: usize) -> Result<(), ConfigError> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(invalid("step_size", format!("must be positive, got {}", self.step_size)));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be at least 1"));
        }
        if self.num_threads == 0 || self.num_threads > n {
            return Err(invalid("num_T", format!("must be in 1..={n}, got {}", self.num_threads)));
        }
        if !self.zeta.is_finite() {
            return Err(invalid("zeta", "must be finite"));
        }
        if self.svrg_sync_period == Some(0) {
            return Err(invalid("svrg_sync_period", "must be at least 1"));
        }
        if let Some(cap) = self.is_weight_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(invalid("is_weight_cap", format!("must be positive, got {cap}")));
            }
        }
        let cores = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
        if self.num_threads > cores {
            log::warn!("num_T = {} exceeds the {cores} available cores; workers will time-share", self.num_threads);
        }
        Ok(())
    }

    /// Worker count actually used by the configured algorithm.
    pub fn effective_threads(&self) -> usize {
        match self.algorithm {
            Algorithm::Sgd => 1,
            _ => self.num_threads,
        }
    }
}
