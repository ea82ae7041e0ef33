use kbcost_core::Error as CoreError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Domain(#[from] CoreError),
    /// A well-formed run whose outcome is a domain failure (infeasible
    /// allocation, failed verification). The report is still emitted.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for usage and input errors, 1 for domain failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Format { .. } => 2,
            CliError::Domain(e) => match e {
                CoreError::Parse(_)
                | CoreError::InvalidParameter(_)
                | CoreError::UnknownSymbol(_)
                | CoreError::LostNotSubset(_)
                | CoreError::SpuriousInBaseline(_) => 2,
                _ => 1,
            },
            CliError::Failed(_) => 1,
        }
    }

    pub fn format(path: &str, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
