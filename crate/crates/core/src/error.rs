use thiserror::Error;

use crate::grid::Vertex;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("vertex {0} is out of bounds or blocked")]
    InvalidVertex(Vertex),
    #[error("map must have positive width and height")]
    EmptyMap,
    #[error("obstacle mask has {found} cells, expected {expected}")]
    MaskSize { expected: usize, found: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("start and goal configurations differ in size ({starts} vs {goals})")]
    SizeMismatch { starts: usize, goals: usize },
    #[error("robot {robot}: vertex {vertex} is not a free map vertex")]
    NotFree { robot: usize, vertex: Vertex },
    #[error("robots {first} and {second} share vertex {vertex}")]
    Duplicate { first: usize, second: usize, vertex: Vertex },
    #[error("robot {robot}: start and goal lie in different connected components")]
    Disconnected { robot: usize },
    #[error("requested {requested} robots but only {available} vertices are available")]
    Capacity { requested: usize, available: usize },
    #[error("invalid generator parameter: {0}")]
    Parameter(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Why a solver produced no plan.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("time or expansion budget exhausted")]
    Timeout,
    #[error("instance is infeasible: {0}")]
    Infeasible(String),
    #[error("search space exhausted without a solution")]
    Exhausted,
    /// An incomplete method stopped without a plan; says nothing about
    /// feasibility.
    #[error("gave up without a plan: {0}")]
    GaveUp(String),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("not a primitive database file (bad magic)")]
    BadMagic,
    #[error("unsupported database format version {0}")]
    Version(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed database: {0}")]
    Malformed(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("phase {phase} ends with robot {robot} at {end} but phase {next} starts it at {start}")]
    Junction {
        phase: usize,
        next: usize,
        robot: usize,
        end: Vertex,
        start: Vertex,
    },
    #[error("phase {phase} has {found} paths, expected {expected}")]
    RobotCount { phase: usize, expected: usize, found: usize },
    #[error("no phases to merge")]
    Empty,
    #[error("execution deadlocked at step {0}")]
    Deadlock(usize),
}
