use thiserror::Error;

/// Errors raised by the library surface.
///
/// Contract violations that can only arise from caller bugs (length
/// mismatches inside a hot loop) are panics instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible state: {0}")]
    InfeasibleState(String),

    #[error("all {0} trials hit the generation cap")]
    AllTrialsAborted(u64),

    #[error("no accepted offspring observed in {0} trials")]
    NoAcceptances(u64),

    #[error("profile too large: {0} differing positions (max {1})")]
    ProfileTooLarge(usize, usize),

    #[error("state space too large: {0} states (max {1})")]
    StateSpaceOverflow(usize, usize),

    #[error("bracket [{lo}, {hi}] does not contain a sign change")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("f1 vanishes at c = {0}")]
    DegenerateRatio(f64),

    #[error("unknown drift index {0}")]
    UnknownIndex(u32),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
