use thiserror::Error;

/// Errors surfaced by parsing, validation, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Signal that an M-step produced an unusable start; the engine drops the
/// start and moves on to the next one rather than aborting the whole fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateStart {
    /// A group's total responsibility mass fell below the usable threshold.
    EmptyGroup { group: usize },
    /// A group accumulated essentially no holding time in some state, so the
    /// generator row cannot be estimated.
    VanishingTime { group: usize, state: usize },
}

impl std::fmt::Display for DegenerateStart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DegenerateStart::EmptyGroup { group } => {
                write!(f, "group {} lost all responsibility mass", group + 1)
            }
            DegenerateStart::VanishingTime { group, state } => write!(
                f,
                "group {} has no holding time in state {}",
                group + 1,
                state + 1
            ),
        }
    }
}
