use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incomparable measures: {0} atoms vs {1} atoms")]
    IncomparableMeasures(usize, usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A model assumption failed; `assumption` names it.
    #[error("assumption violated ({assumption}): {detail}")]
    Assumption { assumption: &'static str, detail: String },

    #[error("{what} did not converge within {iterations} iterations (last gap {last_gap:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last_gap: f64,
    },

    #[error("event unreachable on grid")]
    EventUnreachable,

    #[error("increase replicas or control: {0}")]
    NoHits(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the model assumptions (as opposed to numerical failures).
    pub fn is_assumption(&self) -> bool {
        matches!(self, Error::Assumption { .. })
    }
}
