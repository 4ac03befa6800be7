//! Config-driven experiment runs.
//!
//! A run loads or synthesizes a panel, applies the universe filter, builds
//! features and the `r_{t+lag+1}` target, scores each strategy walk-forward,
//! and reports net and gross performance, inference, costs, smoothing,
//! optimizer, decay, segment and factor tables. Reports are written to a
//! staging directory and renamed into place, so a failed run leaves nothing.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{derive_seed, ExperimentConfig};
pub use pipeline::{prepare, prepare_and_score, run_tables, score_strategies, Prepared, RunOutput, Scored};
pub use report::{emit_report, Cell, Format, Table};
pub use synth::{business_days, generate_synthetic, SignalSpec, SyntheticPanel, SyntheticSpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in stage {stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("numeric failure in stage {stage}: {message}")]
    Numeric { stage: &'static str, message: String },
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit code: 2 config, 3 data or output, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data { .. } | RunError::Io(_) => 3,
            RunError::Numeric { .. } => 4,
        }
    }
}

/// Writes into a sibling staging directory, then swaps it into `dest`.
/// The staging directory is removed if `write` fails.
pub fn write_atomically<F>(dest: &Path, write: F) -> Result<(), RunError>
where
    F: FnOnce(&Path) -> Result<(), RunError>,
{
    let parent = dest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = write(&staging).and_then(|()| {
        if dest.exists() {
            std::fs::remove_dir_all(dest)?;
        }
        std::fs::rename(&staging, dest)?;
        Ok(())
    });
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result
}

/// Runs the whole pipeline and writes the report directory. Returns its path.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf, RunError> {
    let dest = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_path());
    let output = run_tables(config)?;
    write_atomically(&dest, |dir| {
        emit_report(&output.tables, dir)?;
        let mut log = output.solver_log.join("\n");
        if !log.is_empty() {
            log.push('\n');
        }
        std::fs::write(dir.join("solver_log.txt"), log)?;
        let mut warnings = output.warnings.join("\n");
        if !warnings.is_empty() {
            warnings.push('\n');
        }
        std::fs::write(dir.join("warnings.txt"), warnings)?;
        Ok(())
    })?;
    Ok(dest)
}
