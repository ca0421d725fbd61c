use crate::model::MemberId;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A log line or record could not be parsed.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input contained no usable records.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Series within one recording disagree on the sampling period.
    #[error("member {member}: sample period {found} differs from expected {expected}")]
    PeriodMismatch {
        member: MemberId,
        expected: f64,
        found: f64,
    },

    /// Resampling target is not an integer multiple of the source period.
    #[error("target period {target_period} s is not an integer multiple of source period {source_period} s")]
    NonIntegerRatio {
        source_period: f64,
        target_period: f64,
    },

    /// A series or recording is too short for the requested operation.
    #[error("input too short: {0}")]
    TooShort(String),

    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A time lies outside the interval it must fall in.
    #[error("out of span: {0}")]
    OutOfSpan(String),

    /// An input file could not be read.
    #[error("cannot read {path}: {source}")]
    ReadInput {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the input data rather than the
    /// environment. The CLI maps these to exit code 2, the rest to 3.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Read an input file, reporting failures as data errors that name the
/// path (a missing input is the caller's data problem, not an internal
/// fault).
pub fn read_input(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::ReadInput {
        path: path.display().to_string(),
        source,
    })
}
