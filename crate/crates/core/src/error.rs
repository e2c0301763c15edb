use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite input")]
    NonFinite,

    /// Argument outside the operation's domain ("pool too large", "k exceeds pool", ...).
    #[error("{0}")]
    InvalidArgument(String),

    /// A configuration invariant was violated; the message names it.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed file contents: bad magic, unsupported version, truncation.
    #[error("{0}")]
    Format(String),

    /// NaN or infinity appeared during training or evaluation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 2 usage/config, 3 data/format, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::ShapeMismatch(_) | Error::Format(_) | Error::Io { .. } => 3,
            Error::NonFinite | Error::Numerical(_) => 4,
        }
    }
}
