use std::fmt;

/// Errors raised by the simulation, diagnostics and configuration layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("non-finite state at {0}")]
    NumericOverflow(OverflowSite),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Location of a non-finite state inside a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverflowSite {
    pub trajectory: Option<usize>,
    pub step: usize,
}

impl fmt::Display for OverflowSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trajectory {
            Some(j) => write!(f, "trajectory {j}, step {}", self.step),
            None => write!(f, "step {}", self.step),
        }
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Attaches a trajectory index to an overflow error; other variants pass through.
    pub fn in_trajectory(self, j: usize) -> Self {
        match self {
            Error::NumericOverflow(site) => Error::NumericOverflow(OverflowSite {
                trajectory: Some(j),
                ..site
            }),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
