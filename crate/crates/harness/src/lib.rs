//! Experiment runner for the vifbf solvers: reads a TOML config, builds the
//! problem, runs every configured solver and writes plot-ready CSV.
//!
//! Output files, per solver with label `L` (see [`config::SolverConfig::label`]):
//!
//! * `L.trace.csv`: columns [`TRACE_COLUMNS`]. `eps = step_norm^2 / x_norm^2`
//!   up to rounding; `dist_to_known` is empty without a known solution and
//!   `ms` is empty unless wall time recording is on.
//! * `L.gaps.csv` (DUE only): one row per o/d pair with its gap, minimum
//!   effective delay and worst relative excess over supported departures.
//! * `L.gap_histogram.csv` (DUE only): `lower,upper,count`.
//!
//! and one `summary.csv` row per solver.

pub mod config;
mod run;

pub use config::{parse_config, serialize, ConfigError, ExperimentConfig};
pub use run::{
    build_problem, gap_histogram, gap_report, run, BuiltProblem, RunReport, SolverReport,
    OUTPUT_ROOT_ENV, SUMMARY_COLUMNS, TRACE_COLUMNS,
};

use std::path::PathBuf;

/// Process exit codes of the command-line tool.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    /// Some solver stopped without converging (max iterations or divergence).
    pub const NOT_CONVERGED: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot build problem: {0}")]
    Problem(vifbf_core::Error),

    #[error("solver `{label}`: {source}")]
    Solver {
        label: String,
        source: vifbf_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Csv { .. } => exit_code::IO,
            Self::Problem(vifbf_core::Error::Io(_))
            | Self::Solver {
                source: vifbf_core::Error::Io(_),
                ..
            } => exit_code::IO,
            Self::Config(_) | Self::Problem(_) | Self::Solver { .. } => exit_code::CONFIG,
        }
    }
}
