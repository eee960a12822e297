use thiserror::Error;

/// Errors raised across the solver toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarpError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("graph is disconnected: node {to} is unreachable from node {from}")]
    Disconnected { from: usize, to: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("arc {arc} does not reference a required edge of the instance")]
    UnknownArc { arc: usize },

    #[error("illegal action {action} at step {step} (last arc {last}, remaining capacity {remaining})")]
    IllegalAction {
        action: usize,
        step: usize,
        last: usize,
        remaining: u32,
    },

    #[error("no legal action at step {step}")]
    NoLegalAction { step: usize },

    #[error("arc {arc} has demand {demand} exceeding capacity {capacity}")]
    DemandExceedsCapacity { arc: usize, demand: u32, capacity: u32 },

    #[error("instance has {required} required edges; exact solver is capped at {cap}")]
    TooLarge { required: usize, cap: usize },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("environment identity violated: evaluated cost {evaluated} != {expected}")]
    RewardMismatch { evaluated: i64, expected: i64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for CarpError {
    fn from(e: std::io::Error) -> Self {
        CarpError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CarpError>;
