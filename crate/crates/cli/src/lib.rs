//! Batch verification harness: runs named suites of identity checks against
//! the `codazzi` library and writes JSON, CSV and gnuplot data files.

pub mod config;
pub mod report;
pub mod suites;

use std::path::PathBuf;

pub use config::SuiteConfig;
pub use report::{emit_report, Check, Format, Report};
pub use suites::{run_suite, run_suites, Suite};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown suite {0:?} (expected core, holonomy, codazzi, embedding, cone, pairing or all)")]
    UnknownSuite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
