//! Sparse lock-free asynchronous SGD with importance sampling.
//!
//! The crate trains linear binary classifiers on sparse data with four
//! solvers that share one sparse update kernel:
//!
//! * serial SGD,
//! * lock-free ASGD (Hogwild-style, word-atomic coordinates),
//! * IS-ASGD, which samples each worker's partition proportionally to
//!   per-sample gradient-norm bounds and rescales the step to stay unbiased,
//! * SVRG-ASGD, which adds a snapshot full gradient on every iteration and
//!   therefore writes all `d` coordinates per update.

pub mod data;
pub mod importance;
pub mod metrics;
pub mod objectives;
pub mod rng;
pub mod solvers;
pub mod synthetic;

pub use data::{parse_libsvm, SparseDataset};
pub use importance::{BalanceMode, ImportanceProfile};
pub use metrics::{ConvergenceTrace, RmseMode};
pub use objectives::{Family, Objective};
pub use solvers::{train, Algorithm, RunOutcome, SolverConfig};
