//! Grid multi-robot path planning.
//!
//! The crate provides the shared grid model and collision semantics, instance
//! generators, a space-time low-level planner, the ECBS constraint-tree
//! search, a motion-primitive database for small subgrids, the
//! database-accelerated DCBS solver, a time-expanded max-flow solver for
//! unlabeled problems and the sparsification-based SCBS solver.

pub mod error;
pub mod grid;
pub mod primdb;
pub mod budget;
pub mod dcbs;
pub mod ecbs;
pub mod instance;
pub mod lowlevel;
pub mod plan;
pub mod scenario;
pub mod scbs;
pub mod unlabeled;

pub use error::{DbError, GridError, InstanceError, MergeError, SolveError};
pub use grid::{DistanceOracle, GridMap, Vertex, UNREACHABLE};
pub use instance::{Configuration, Instance};
pub use plan::{count_conflicts, first_conflict, lower_bounds, metrics, validate_plan, Conflict, ConflictKind, Path, Plan};
