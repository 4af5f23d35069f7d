use thiserror::Error;

use crate::game::Profile;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or invalid caller input (bad rational, unknown resource,
    /// inconsistent demand, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// A strategy or profile outside the feasible region.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("iteration cap of {cap} exceeded after {steps} steps")]
    NonTermination {
        cap: u128,
        steps: u64,
        last_profile: Box<Profile>,
    },

    #[error("conditional gradient did not converge in {iterations} iterations (last gap {last_gap:e})")]
    Convergence { iterations: usize, last_gap: f64 },

    /// A guarantee that should hold by construction failed.
    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("predicted work {predicted:e} exceeds budget {budget:e}")]
    Budget { predicted: f64, budget: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
