use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Endpoint,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{0}: file contains no data rows")]
    EmptyFile(PathBuf),

    #[error("unknown country `{0}`")]
    UnknownCountry(String),

    #[error("country `{0}` has no universities in the catalog")]
    NoCoverage(String),

    #[error("no recommendations resolved to `{0}`; reputational coverage is undefined")]
    UndefinedCoverage(String),

    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("template `{template}` uses unknown placeholder `{{{placeholder}}}`")]
    UnknownPlaceholder { template: String, placeholder: String },

    #[error("unknown subject tag `{0}`")]
    UnknownTag(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("endpoint error: {0}")]
    Endpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Endpoint(_) => ErrorKind::Endpoint,
            _ => ErrorKind::Data,
        }
    }

    /// Short machine-readable tag for error summaries.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Parse { .. } => "parse",
            Error::MissingColumn { .. } => "missing_column",
            Error::EmptyFile(_) => "empty_file",
            Error::UnknownCountry(_) => "unknown_country",
            Error::NoCoverage(_) => "no_coverage",
            Error::UndefinedCoverage(_) => "undefined_coverage",
            Error::InvalidCoordinate(_) => "invalid_coordinate",
            Error::UnknownPlaceholder { .. } => "unknown_placeholder",
            Error::UnknownTag(_) => "unknown_tag",
            Error::InvalidInput(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::Endpoint(_) => "endpoint",
            Error::Json(_) => "json",
        }
    }
}
