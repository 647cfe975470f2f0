use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A library error, tagged with the pipeline stage that raised it.
    #[error("{stage} failed: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: coopfdtd::Error,
    },

    #[error("table {path}: row {row}, column {column}: {message}")]
    Table {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("sweep finished with {failed} of {total} points failed")]
    PartialSweep { failed: usize, total: usize },

    #[error("seed check failed: {0}")]
    SeedCheck(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn stage(stage: impl Into<String>) -> impl FnOnce(coopfdtd::Error) -> Self {
        let stage = stage.into();
        move |source| match source {
            // violated preconditions trace back to the configuration
            coopfdtd::Error::InvalidArgument(msg) => CliError::Config(format!("{stage}: invalid argument: {msg}")),
            source => CliError::Numerical { stage, source },
        }
    }

    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 numerical, 4 partial sweep.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Table { .. } => 2,
            CliError::PartialSweep { .. } => 4,
            CliError::Numerical { .. } | CliError::Io { .. } | CliError::SeedCheck(_) => 3,
        }
    }
}
