//! Convergence metrics, traces and error-rate speedup slices.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SparseDataset;
use crate::objectives::Objective;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has no records")]
    EmptyTrace,
    #[error("levels must be sorted in descending order")]
    LevelsNotDescending,
    #[error("trace schema mismatch at column {position}: expected '{expected}', found '{found}'")]
    Schema { position: usize, expected: String, found: String },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("unknown rmse mode '{0}' (expected per_sample or sqrt_objective)")]
    UnknownRmseMode(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmseMode {
    /// `sqrt(mean_i f_i(w)^2)`: each sample's objective is its error term.
    #[default]
    PerSample,
    /// `sqrt(F(w))`.
    SqrtObjective,
}

impl FromStr for RmseMode {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_sample" => Ok(RmseMode::PerSample),
            "sqrt_objective" => Ok(RmseMode::SqrtObjective),
            other => Err(MetricsError::UnknownRmseMode(other.to_string())),
        }
    }
}

impl fmt::Display for RmseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RmseMode::PerSample => "per_sample",
            RmseMode::SqrtObjective => "sqrt_objective",
        })
    }
}

pub fn rmse(ds: &SparseDataset, obj: &Objective, w: &[f64]) -> f64 {
    rmse_with(RmseMode::PerSample, ds, obj, w)
}

pub fn rmse_with(mode: RmseMode, ds: &SparseDataset, obj: &Objective, w: &[f64]) -> f64 {
    assert_eq!(w.len(), ds.dim(), "weight vector length must match the dataset dimension");
    let n = ds.len() as f64;
    match mode {
        RmseMode::PerSample => {
            let sum_sq: f64 = (0..ds.len())
                .map(|i| {
                    let l = obj.loss_unchecked(ds, i, w);
                    l * l
                })
                .sum();
            (sum_sq / n).sqrt()
        }
        RmseMode::SqrtObjective => obj.objective_value(ds, w).sqrt(),
    }
}

/// Fraction of samples with `sign(w'x) != y`; a zero margin counts as an error.
pub fn error_rate(ds: &SparseDataset, w: &[f64]) -> f64 {
    assert_eq!(w.len(), ds.dim(), "weight vector length must match the dataset dimension");
    let wrong = (0..ds.len())
        .filter(|&i| {
            let (idx, val) = ds.row(i);
            let dot: f64 = idx.iter().zip(val).map(|(&j, &x)| w[j as usize] * x).sum();
            ds.label(i) * dot <= 0.0
        })
        .count();
    wrong as f64 / ds.len() as f64
}

pub const TRACE_COLUMNS: [&str; 6] =
    ["epoch", "wall_clock_s", "rmse", "error_rate", "best_error_rate", "touched_coords_per_iter"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub wall_clock_s: f64,
    pub rmse: f64,
    pub error_rate: f64,
    pub best_error_rate: f64,
    pub touched_coords_per_iter: f64,
}

/// Per-epoch convergence records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub algorithm: String,
    pub num_threads: usize,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn new(algorithm: impl Into<String>, num_threads: usize, seed: u64) -> Self {
        ConvergenceTrace { algorithm: algorithm.into(), num_threads, seed, records: Vec::new() }
    }

    /// Appends a record, carrying the best-so-far error rate forward.
    pub fn push(&mut self, epoch: usize, wall_clock_s: f64, rmse: f64, error_rate: f64, touched_coords_per_iter: f64) {
        let best_error_rate = self.records.last().map_or(error_rate, |r| r.best_error_rate.min(error_rate));
        self.records.push(TraceRecord { epoch, wall_clock_s, rmse, error_rate, best_error_rate, touched_coords_per_iter });
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn best_error_rate(&self) -> Option<f64> {
        self.last().map(|r| r.best_error_rate)
    }

    /// First epoch whose RMSE is at or below `threshold`.
    pub fn epochs_to_rmse(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.rmse <= threshold).map(|r| r.epoch)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.epoch <= a.epoch {
                return Err(MetricsError::InvalidTrace(format!("epoch {} follows {}", b.epoch, a.epoch)));
            }
            if b.wall_clock_s < a.wall_clock_s {
                return Err(MetricsError::InvalidTrace(format!("wall clock decreases at epoch {}", b.epoch)));
            }
            if b.best_error_rate > a.best_error_rate {
                return Err(MetricsError::InvalidTrace(format!("best error rate increases at epoch {}", b.epoch)));
            }
        }
        for r in &self.records {
            if !(0.0..=1.0).contains(&r.error_rate) {
                return Err(MetricsError::InvalidTrace(format!("error rate {} outside [0, 1]", r.error_rate)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            writer.write_record(TRACE_COLUMNS)?;
        }
        for r in &self.records {
            writer.serialize(r)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a trace CSV, checking the header column by column.
    pub fn read_csv<R: Read>(input: R, algorithm: impl Into<String>) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        for (position, expected) in TRACE_COLUMNS.iter().enumerate() {
            let found = headers.get(position).unwrap_or("");
            if found.trim() != *expected {
                return Err(MetricsError::Schema {
                    position,
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        }
        if headers.len() > TRACE_COLUMNS.len() {
            return Err(MetricsError::Schema {
                position: TRACE_COLUMNS.len(),
                expected: String::new(),
                found: headers[TRACE_COLUMNS.len()].to_string(),
            });
        }
        let records = reader.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        let trace = ConvergenceTrace { algorithm: algorithm.into(), num_threads: 0, seed: 0, records };
        trace.validate()?;
        Ok(trace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupSlice {
    pub level: f64,
    pub time_a_s: f64,
    pub time_b_s: f64,
    pub speedup: f64,
    /// The level was already met at a trace's first record, so its time is
    /// that record's timestamp rather than an interpolated crossing.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedupReport {
    pub slices: Vec<SpeedupSlice>,
    /// Levels not reached by at least one trace, or with a zero time.
    pub omitted: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Wall-clock time at which `best_error_rate` first reaches `level`,
/// linearly interpolated between the bracketing records.
fn time_to_level(trace: &ConvergenceTrace, level: f64) -> Option<(f64, bool)> {
    let k = trace.records.iter().position(|r| r.best_error_rate <= level)?;
    let cur = &trace.records[k];
    if k == 0 {
        return Some((cur.wall_clock_s, true));
    }
    let prev = &trace.records[k - 1];
    let drop = prev.best_error_rate - cur.best_error_rate;
    let frac = if drop > 0.0 { (prev.best_error_rate - level) / drop } else { 1.0 };
    Some((prev.wall_clock_s + frac * (cur.wall_clock_s - prev.wall_clock_s), false))
}

/// Speedup of `a` over `b` at each error-rate level: `time_b / time_a`.
pub fn speedup_slices(a: &ConvergenceTrace, b: &ConvergenceTrace, levels: &[f64]) -> Result<SpeedupReport> {
    if a.records.is_empty() || b.records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    if levels.windows(2).any(|w| w[1] > w[0]) {
        return Err(MetricsError::LevelsNotDescending);
    }
    let mut report = SpeedupReport::default();
    for &level in levels {
        match (time_to_level(a, level), time_to_level(b, level)) {
            (Some((ta, ea)), Some((tb, eb))) if ta > 0.0 && tb > 0.0 => report.slices.push(SpeedupSlice {
                level,
                time_a_s: ta,
                time_b_s: tb,
                speedup: tb / ta,
                extrapolated: ea || eb,
            }),
            _ => report.omitted.push(level),
        }
    }
    if report.slices.is_empty() {
        report.diagnostic = Some(format!("no level among {levels:?} is reached by both traces at a positive time"));
    }
    Ok(report)
}

impl SpeedupReport {
    pub fn mean_speedup(&self) -> Option<f64> {
        if self.slices.is_empty() {
            None
        } else {
            Some(self.slices.iter().map(|s| s.speedup).sum::<f64>() / self.slices.len() as f64)
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["level", "time_a_s", "time_b_s", "speedup", "extrapolated"])?;
        for s in &self.slices {
            writer.write_record([
                s.level.to_string(),
                s.time_a_s.to_string(),
                s.time_b_s.to_string(),
                s.speedup.to_string(),
                s.extrapolated.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}
