use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent caller input.
    #[error("input error: {0}")]
    Input(String),
    /// Table shape does not meet an index or model requirement.
    #[error("shape error: {0}")]
    Shape(String),
    /// Quantity undefined for the given table (e.g. no pairs when N < 2).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("enumeration budget of {budget} tables exceeded while enumerating {context}")]
    Budget { budget: usize, context: String },
    /// Requested method or value is not available for this combination.
    #[error("capability error: {0}")]
    Capability(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Command-line parsing failure, or a help/version request.
    #[error("{0}")]
    Cli(clap::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } | Error::Capability(_) | Error::Unsupported(_) => 3,
            Error::Cli(e) => e.exit_code(),
            _ => 2,
        }
    }
}
