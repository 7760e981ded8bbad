use thiserror::Error;

use crate::solver::IterationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("no boundary face is tagged Dirichlet")]
    EmptyDirichlet,

    #[error("degenerate cell {0}")]
    DegenerateCell(usize),

    #[error("degenerate face {0}")]
    DegenerateFace(usize),

    #[error("singular projection on cell {cell}: {what}")]
    SingularProjection { cell: usize, what: &'static str },

    #[error("inverse mobility is not SPD on cell {cell} (min eigenvalue {min_eigenvalue:e})")]
    NonSpd { cell: usize, min_eigenvalue: f64 },

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("fixed point iteration did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        trace: Box<IterationTrace>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
