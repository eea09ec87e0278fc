use thiserror::Error;

use crate::grid::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("plan has {got} paths but instance has {expected} agents")]
    AgentCountMismatch { expected: usize, got: usize },

    #[error("agent {agent}: path is empty")]
    EmptyPath { agent: usize },

    #[error("agent {agent}: path ends at {end:?}, not at goal {goal:?}")]
    IncompletePath { agent: usize, end: Cell, goal: Cell },

    #[error("agent {agent}: invalid move at timestep {timestep} from {from:?} to {to:?}")]
    InvalidMove {
        agent: usize,
        timestep: usize,
        from: Cell,
        to: Cell,
    },

    #[error("agent {agent}: path starts at {got:?}, expected {expected:?}")]
    WrongStart {
        agent: usize,
        expected: Cell,
        got: Cell,
    },

    #[error("cell {0:?} is blocked or out of bounds")]
    BlockedCell(Cell),

    #[error("{to:?} is unreachable from {from:?}")]
    Unreachable { from: Cell, to: Cell },

    #[error("search deadline exceeded")]
    Timeout,

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("diffusion error: {0}")]
    Diffusion(String),

    #[error("denoiser parameter error: {0}")]
    Params(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
