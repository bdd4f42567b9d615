use std::path::PathBuf;

/// Errors produced anywhere in the imputation and modelling workflow.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error at row {row}, column `{column}`: {message}")]
    Domain {
        row: usize,
        column: String,
        message: String,
    },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cannot initialize imputation: variable `{0}` has no observed values")]
    Initialization(String),

    #[error("design matrix is rank deficient: term `{term}` is aliased")]
    RankDeficient { term: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("imputation failed in chain {chain}, iteration {iteration}, variable `{variable}`: {source}")]
    Imputation {
        chain: usize,
        iteration: usize,
        variable: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
