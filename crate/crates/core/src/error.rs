use alloc::string::String;
use core::fmt;

/// Errors produced by the numeric kernels, the streaming runtime and the
/// transducer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for `op`.
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A softmax row had no finite entry.
    DegenerateRow { row: usize },
    /// An operation that needs at least one row or frame received none.
    EmptyInput(&'static str),
    /// Invalid configuration value.
    Config(String),
    /// Token id outside the vocabulary.
    InvalidToken { id: u32, limit: u32 },
    /// Operation not allowed in the current session state.
    State(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::DegenerateRow { row } => write!(f, "row {row} has no finite entry"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidToken { id, limit } => {
                write!(f, "token id {id} out of range (limit {limit})")
            }
            Error::State(msg) => write!(f, "invalid session state: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
