//! Command-line driver for the PFASST heat-equation solver: argument
//! parsing, a thread-per-rank PFASST backend, wall-clock timing and CSV
//! output.
//!
//! `steps.csv` has one row per time step with columns
//! `step,iterations,residual,rel_max_error`; `summary.csv` has one row per
//! rank count of the model curve with columns
//! `mode,ranks,K,alpha,beta,total_seconds,model_speedup`. Floats carry 17
//! significant digits.

pub mod args;
pub mod backend;
pub mod report;

pub use args::Args;
pub use backend::ConcurrentBackend;
pub use report::{run_and_report, CliError, MonotonicClock};
