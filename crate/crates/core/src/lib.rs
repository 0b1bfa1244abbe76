//! Finite-element toolkit for optimal control of the quasilinear equation
//! `-div((1 + |y|) ∇y) = u` on the unit square with homogeneous Dirichlet data.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the benchmarks use.

mod scalar;

pub mod bench;
pub mod fem;
pub mod forward;
pub mod grid;
pub mod linalg;
pub mod manufactured;
pub mod nonsmooth;
pub mod ssn;

pub use scalar::{axpy, dot, norm2, sign0, Real};

pub use fem::{FemError, NodalFunction as GenericNodalFunction};
pub use grid::{build_mesh, MeshError};
pub use linalg::{CsrMatrix as GenericCsrMatrix, LinalgError};
pub use nonsmooth::{abs_coefficient, AbsCoefficient, Pc1Scalar};

pub type Mesh = grid::StructuredMesh<f64>;
pub type NodalFunction = fem::NodalFunction<f64>;
pub type SparseMatrix = linalg::CsrMatrix<f64>;
