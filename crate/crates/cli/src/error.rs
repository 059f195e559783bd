use levynoise::Error;
use thiserror::Error as ThisError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_ACCEPTANCE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, ThisError)]
pub enum CliError {
    /// A config or flag value is unusable; `field` is its dotted path.
    #[error("{field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("{0}")]
    Core(#[from] Error),

    #[error("cannot read config {path}: {source}")]
    ConfigIo { path: String, source: std::io::Error },

    #[error("cannot parse config: {0}")]
    ConfigSyntax(#[from] toml::de::Error),

    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Attaches a config section to a core parameter error.
    pub fn in_section(section: &str) -> impl Fn(Error) -> CliError + '_ {
        move |e| match e {
            Error::Parameter { name, reason } => CliError::validation(format!("{section}.{name}"), reason),
            Error::Dimension { expected, actual } => {
                CliError::validation(section, format!("dimension mismatch: expected {expected}, got {actual}"))
            }
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Numerical { .. } | Error::NonFinite { .. } | Error::Resource(_)) => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}
