use thiserror::Error;

/// Errors raised while configuring or feeding a sequential test.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid wager: {0}")]
    InvalidWager(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(&'static str),

    #[error("no deaths possible: both mortality rates are zero")]
    NoDeathsPossible,

    #[error("not a transition: {from} -> {to}")]
    NotATransition { from: String, to: String },

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("stream not sorted: time {time} follows {previous}")]
    StreamNotSorted { previous: f64, time: f64 },

    #[error("negative study time {0}")]
    NegativeStudyTime(f64),

    #[error("risk set exhausted for arm {0}")]
    RiskSetExhausted(u8),

    #[error("invalid arm label {0}; expected 0 or 1")]
    InvalidArm(u8),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
