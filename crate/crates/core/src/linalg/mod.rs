//! Sparse matrices and the linear solvers used by the discretised problems.

mod block;
mod csr;
mod krylov;
mod ldl;

pub use block::{solve_block2, BlockSolver, BlockSystem};
pub use csr::CsrMatrix;
pub use krylov::{gmres, GmresOptions, GmresOutcome};
pub use ldl::{solve_spd, LdlFactor, LdlSymbolic};

use thiserror::Error;

/// Default relative residual target for linear solves.
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;

/// [`DEFAULT_LINEAR_TOL`], raised to `1000 ε` for scalars too coarse to reach it.
pub fn default_linear_tol<T: crate::Real>() -> T {
    T::lit(DEFAULT_LINEAR_TOL).max(T::epsilon() * T::lit(1e3))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry ({row}, {col}) outside a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is not symmetric positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("zero or non-finite pivot {pivot} during factorisation")]
    Singular { pivot: usize },
    #[error("residual {residual:e} above tolerance {tol:e} after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("fill-reducing ordering failed: {0}")]
    Ordering(String),
}
