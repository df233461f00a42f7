use thiserror::Error;

/// Errors raised while constructing or transforming coalition data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("agent count must be at least 1")]
    NoAgents,
    #[error("{n_agents} agents exceed the lattice cap of {cap}")]
    TooManyAgents { n_agents: usize, cap: usize },
    #[error("table has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("value of the empty coalition must be 0, found {0}")]
    NonZeroEmpty(f64),
    #[error("mask {bits:#x} does not fit in {n_agents} agents")]
    MaskOutOfRange { bits: u64, n_agents: usize },
    #[error("agent index {index} out of range for {n_agents} agents")]
    AgentOutOfRange { index: usize, n_agents: usize },
    #[error("tables disagree on agent count ({left} vs {right})")]
    AgentCountMismatch { left: usize, right: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("pairwise coupling matrix is not symmetric at ({row}, {col})")]
    AsymmetricCoupling { row: usize, col: usize },
    #[error("pairwise coupling matrix has a nonzero diagonal at {0}")]
    NonZeroDiagonal(usize),
    #[error("penalty coefficient is zero: influence has no finite peak")]
    NoFinitePeak,
    #[error("need at least {needed} distinct precision values, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("design matrix is rank deficient")]
    DegenerateDesign,
    #[error("no residual degrees of freedom for the curvature test")]
    NoResidualDof,
    #[error("empty sample set")]
    EmptySamples,
}

pub type Result<T> = core::result::Result<T, Error>;
