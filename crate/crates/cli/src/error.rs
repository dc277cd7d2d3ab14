use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Parse(String),

    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error("{0}")]
    Core(#[from] spatial_lrd_core::Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Machine-readable form written to `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub version: &'static str,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        CliError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    /// A core error raised while building the named config section.
    pub fn invalid(section: &str, e: spatial_lrd_core::Error) -> Self {
        use spatial_lrd_core::Error as E;
        match e {
            E::InvalidParameter { name, reason } => {
                CliError::field(&format!("{section}.{name}"), reason)
            }
            E::DimensionMismatch { .. }
            | E::Parse(_)
            | E::NotSummable { .. }
            | E::LambdaTooSmall(_) => CliError::field(section, e.to_string()),
            other => CliError::Core(other),
        }
    }

    /// 1 for invalid input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Field { .. } => 1,
            CliError::Core(_) | CliError::Io(_) => 2,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (kind, field) = match self {
            CliError::Parse(_) => ("validation", None),
            CliError::Field { field, .. } => ("validation", Some(field.clone())),
            CliError::Core(_) => ("runtime", None),
            CliError::Io(_) => ("io", None),
        };
        let message = match self {
            CliError::Field { message, .. } => message.clone(),
            other => other.to_string(),
        };
        ErrorReport {
            version: spatial_lrd_core::VERSION,
            kind,
            field,
            message,
            exit_code: self.exit_code(),
        }
    }
}
