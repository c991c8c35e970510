use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a number")]
    Parse { row: usize, column: String, value: String },

    #[error("validation error at row {row}, column `{column}`: {message}")]
    Validation { row: usize, column: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("imputation error: {0}")]
    Imputation(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("interface error: {0}")]
    Interface(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("{context}: {source}")]
    At {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the coordinates at which it happened.
    pub fn at(self, context: impl Into<String>) -> Error {
        Error::At { context: context.into(), source: Box::new(self) }
    }

    /// Process exit code by error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 3,
            Error::MissingColumn(_)
            | Error::Schema(_)
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Csv(_)
            | Error::Json(_) => 4,
            Error::Imputation(_)
            | Error::Fit(_)
            | Error::Interface(_)
            | Error::UndefinedMetric(_)
            | Error::Generation(_) => 5,
            Error::At { source, .. } => source.exit_code(),
        }
    }

    /// The innermost error, with any context wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
