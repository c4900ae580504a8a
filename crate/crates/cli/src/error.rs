use thiserror::Error;

use crate::report::Report;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CRITERION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: mfbsde_core::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    /// A failure after some output was produced; the partial report is flushed.
    #[error("{source}")]
    Partial {
        #[source]
        source: Box<CliError>,
        partial: Box<Report>,
    },
}

impl CliError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(mfbsde_core::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Core { context, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_divergence() => EXIT_DIVERGENCE,
            CliError::Partial { source, .. } => source.exit_code(),
            _ => EXIT_USAGE,
        }
    }
}
