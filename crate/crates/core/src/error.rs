use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {0} is outside [0, 1]")]
    InvalidTime(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A conversion would divide by an interpolant coefficient below its floor.
    #[error("degenerate schedule at t={t}: {what}")]
    DegenerateSchedule { what: &'static str, t: f64 },

    #[error("non-finite value during {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("malformed file: {0}")]
    Format(String),

    /// Failure inside a control episode, with its location.
    #[error("episode {episode}, cycle {cycle}: {source}")]
    InEpisode {
        episode: u64,
        cycle: usize,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Broad failure category, used by the CLI for exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) | Error::InvalidTime(_) => ErrorCategory::Config,
            Error::DimensionMismatch { .. }
            | Error::InvalidData(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorCategory::Data,
            Error::InEpisode { source, .. } => source.category(),
            Error::DegenerateSchedule { .. }
            | Error::NonFinite { .. }
            | Error::Divergence { .. } => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
