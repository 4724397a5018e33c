use capacity_rct::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// 2 for bad input, 3 for an infeasible design search, 4 for numeric or
    /// I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => match source {
                CoreError::Domain(_) => 2,
                CoreError::SearchExhausted { .. } => 3,
                CoreError::Numeric(_) => 4,
            },
            CliError::Io { .. } | CliError::Output(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches subcommand context to core errors.
pub trait Context<T> {
    fn context(self, ctx: &str) -> CliResult<T>;
}

impl<T> Context<T> for capacity_rct::Result<T> {
    fn context(self, ctx: &str) -> CliResult<T> {
        self.map_err(|source| CliError::Core {
            context: ctx.to_string(),
            source,
        })
    }
}
