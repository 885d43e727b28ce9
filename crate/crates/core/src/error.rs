use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("variable `{name}` at {pos} is out of range 1..{n}")]
    VariableOutOfRange { name: String, pos: usize, n: usize },

    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },

    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),

    #[error("derivative depth {requested} exceeds the configured maximum {max}")]
    DepthExceeded { requested: usize, max: usize },

    #[error("point is not admissible: {0}")]
    Inadmissible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("transport failed: {0}")]
    Transport(String),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
