use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown edge {0}")]
    UnknownEdge(u64),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("not an end component: {0}")]
    NotEndComponent(String),
    #[error("malformed linear system: {0}")]
    MalformedSystem(String),
    #[error("adversary enumeration exceeds the cap ({count} > {cap})")]
    AdversaryCap { count: u128, cap: u128 },
    #[error("worst-case value iteration needs at most one non-trivial dimension, found {0}")]
    NotUnidimensional(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("no worst-case fallback strategy found within the search budget")]
    FallbackUnavailable,
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
