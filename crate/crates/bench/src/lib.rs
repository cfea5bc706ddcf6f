//! Benchmark harness for the planners in `mrpp-core`: solver specs, suite
//! generation, a parallel runner that re-validates every plan, and summary
//! output.

pub mod report;
pub mod solver;
pub mod suite;

pub use report::{summarize, write_summary, RecordWriter, SummaryRow};
pub use solver::{SolverRun, SolverSpec, SpecError};
pub use suite::{load_map, run_one, run_suite, BenchError, BenchSuite, Generator, Outcome, RunOptions, RunRecord, SuiteInstance};
