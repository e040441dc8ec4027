//! Config-driven orchestration: smooth every population-year with all four
//! smoothers, keep the best by RMSE, fit segmented median regressions at the
//! reported ages and write the report tables.

mod config;
mod report;
mod run;

pub use config::{
    has_errors, validate_config, DataPaths, Finding, RunConfig, Severity, WindowSpec, DEFAULT_AGES,
    DEFAULT_BOOTSTRAP_REPS, MIN_WINDOW_YEARS,
};
pub use report::{
    diagnostics_jsonl, plot_tsv, report_from_manifest, table1_csv, table2_csv, table3_csv, write_outputs, FileDigest,
    Manifest, MANIFEST_FILE, RESULTS_FILE,
};
pub use run::{run, AgeEntry, AgeResult, MethodOutcome, PopulationResult, RunReport, UnitTiming};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("configuration has {} error(s)", .0.iter().filter(|f| f.severity == Severity::Error).count())]
    Validation(Vec<Finding>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: crate::ingest::IngestError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }
}
