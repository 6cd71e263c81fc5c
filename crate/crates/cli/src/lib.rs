//! Experiment harness for the SKNA denoising toolkit: configuration,
//! leave-one-subject-out orchestration across mixing, training, denoising,
//! feature extraction, statistics and classification, plus report and
//! figure emission. The `skna` binary is a thin shell over this library.

pub mod config;
pub mod experiment;
pub mod figures;
pub mod report;
pub mod tables;

pub use config::{snr_tag, ExperimentConfig, Overrides};
pub use experiment::{run_loso, LosoOutcome};
pub use report::{emit_report, reload_figures};

/// Harness-level failures, each mapped to a process exit code:
/// configuration problems exit 2, data/format/e-I/O problems exit 3, and a
/// run that completed with aborted folds exits 4.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

/// Exit code for a partial report (one or more folds aborted).
pub const EXIT_PARTIAL: u8 = 4;
