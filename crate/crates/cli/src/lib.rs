//! Command-line orchestration of MASKER experiments: configuration,
//! artifact layout, multi-seed runs and report aggregation.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use std::path::Path;

pub use config::{EvalTarget, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] masker_core::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    /// 2 for configuration problems, 3 for data problems, 4 for numerical
    /// divergence.
    pub fn exit_code(&self) -> i32 {
        use masker_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::WrongMaskKind { .. } => 2,
                E::Divergence { .. } => 4,
                _ => 3,
            },
        }
    }
}
