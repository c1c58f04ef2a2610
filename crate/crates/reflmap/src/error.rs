use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: config/argument errors exit
/// with 2, data/format errors with 3, numerical failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (bad magic, truncated payload, size mismatch).
    #[error("format error: {0}")]
    Format(String),

    /// Structurally valid input carrying unusable values (NaN payload, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Caller violated a precondition (shape mismatch, out-of-range index).
    #[error("argument error: {0}")]
    Argument(String),

    /// Configuration could not be read or is out of documented ranges.
    #[error("config error: {0}")]
    Config(String),

    /// A solver or iteration produced non-finite or unusable results.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code used by the command-line interface for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) => 2,
            Error::Format(_) | Error::Data(_) | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}
