use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        value: f64,
    },
    #[error("dates not strictly increasing at row {row} ({date})")]
    UnorderedDates { row: usize, date: String },
    #[error("missing value for {ticker} on {date}")]
    MissingValue { ticker: String, date: String },
    #[error("need at least 3 tickers, found {0}")]
    TooFewTickers(usize),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("zero variance for {ticker} within window")]
    ZeroVariance { ticker: String },
    #[error("zero correlation between nodes {0} and {1}: sign undefined")]
    ZeroCorrelation(usize, usize),
    #[error("link ({0}, {1}) has no weighted two-stars")]
    ZeroWeightStar(usize, usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("network too large for exact enumeration: {links} links (max {max})")]
    TooLarge { links: usize, max: usize },
    #[error("fixed-point iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("quadrature did not converge (error estimate {estimate:e})")]
    Quadrature { estimate: f64 },
    #[error("bad bracket: {0}")]
    BadBracket(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
