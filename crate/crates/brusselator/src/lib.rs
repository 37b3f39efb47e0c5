//! One-dimensional advection-reaction brusselator on simulated ranks, with a
//! task-local and a global nonlinear solver, a grouped-cell batch mode, and a
//! vector benchmark harness.

pub mod batch;
pub mod bench;
pub mod config;
pub mod field;
pub mod nls;
pub mod physics;
pub mod report;
pub mod rhs;
pub mod run;
pub mod timing;

pub use batch::{run_batch, BatchConfig, BatchReport};
pub use bench::{bench_vectors, BenchConfig, BenchReport};
pub use config::{PolicyKind, ProblemConfig, SolverKind};
pub use report::RunReport;
pub use run::{run, run_node_local};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BrusselatorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rank {rank}: {source}")]
    Integrator {
        rank: usize,
        source: sunbeam::integrator::IntegratorError,
    },
    #[error(transparent)]
    Vector(#[from] sunbeam::nvector::VectorError),
    #[error(transparent)]
    Matrix(#[from] sunbeam::sunmatrix::MatrixError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
