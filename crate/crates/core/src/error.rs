use thiserror::Error;

use crate::admm::StaticSolution;
use crate::socp::SolveStatus;

/// Errors produced anywhere in the crate.
///
/// Base station and user numbers carried in variants are 0-indexed; the
/// `Display` impl prints them 1-indexed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("base station {} holds no interference copy for user {}", .bs + 1, .user + 1)]
    MissingIndex { bs: usize, user: usize },

    #[error("user {} has a zero direct channel", .user + 1)]
    ZeroChannel { user: usize },

    #[error("user {}: beamforming direction is orthogonal to its own channel", .user + 1)]
    OrthogonalDirection { user: usize },

    #[error("base station {}: local subproblem ended with status {status:?}", .bs + 1)]
    LocalSubproblem { bs: usize, status: SolveStatus },

    #[error("ADMM did not reach the convergence threshold within {} iterations", .0.history.len())]
    StaticTimeout(Box<StaticSolution>),

    #[error("channel update rejected {0} times in a row; scenario too tight")]
    RejectionLimit(usize),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
