use std::fmt;

/// A single failed validation rule, addressed by its config path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invalid {
    pub field: String,
    pub reason: String,
}

impl Invalid {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path, e.g. `kappa` -> `aoi.kappa`.
    pub fn nested(mut self, parent: &str) -> Self {
        self.field = format!("{parent}.{}", self.field);
        self
    }
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    InvalidConfig(Vec<Invalid>),

    #[error("interference-plus-noise covariance is not positive definite")]
    SingularCovariance,

    #[error("exhaustive search refused: {given} candidates exceeds the limit of {limit}")]
    TooManyCandidates { given: usize, limit: usize },

    #[error("{0} is outside the domain of the function")]
    Domain(String),

    #[error("channel source exhausted at TTI {0}")]
    ChannelExhausted(u64),

    #[error("channel source produced {got} but the simulation expects {expected}")]
    ChannelShape { expected: String, got: String },
}

fn join(items: &[Invalid]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
