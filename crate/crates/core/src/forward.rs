//! Forward solvers: the state equation through the Kirchhoff transform or a
//! frozen-coefficient Picard iteration, the linearised equation, its adjoint,
//! and a difference-quotient check of the directional derivative.

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{
    apply_dirichlet, centroid_value, coupling_matrix, h1_seminorm_values, mass, stiffness,
    Coefficient, FemError, NodalFunction,
};
use crate::grid::{MeshError, StructuredMesh};
use crate::linalg::{
    default_linear_tol, gmres, CsrMatrix, GmresOptions, LdlFactor, LdlSymbolic, LinalgError,
};
use crate::nonsmooth::{
    abs_coefficient, clarke_field, kirchhoff_inverse, mollify, NonsmoothError, Pc1Scalar,
};
use crate::scalar::{norm2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Nonsmooth(#[from] NonsmoothError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Picard iteration stalled after {iterations} iterations (last update {update:e})")]
    PicardNotConverged {
        iterations: usize,
        update: f64,
        last: Vec<f64>,
        previous: Vec<f64>,
    },
}

/// Frozen-coefficient iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig<T> {
    /// Bound on the H¹ seminorm of the update between successive iterates.
    pub tol: T,
    pub max_iter: usize,
    /// Mollification radius; zero keeps the raw coefficient.
    pub epsilon: T,
}

impl<T: Real> Default for PicardConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: 100,
            epsilon: T::zero(),
        }
    }
}

impl<T: Real> PicardConfig<T> {
    pub fn validate(&self) -> Result<(), ForwardError> {
        if !(self.tol > T::zero()) || !self.tol.is_finite() {
            return Err(ForwardError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(ForwardError::InvalidConfig(
                "max_iter must be at least 1".into(),
            ));
        }
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return Err(ForwardError::InvalidConfig(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Quadrature order used when the Picard coefficient is mollified.
pub const MOLLIFIER_ORDER: usize = 32;

/// Load vector `M u` of a P1 control.
pub fn control_load<T: Real>(
    mesh: &StructuredMesh<T>,
    u: &NodalFunction<T>,
) -> Result<Vec<T>, ForwardError> {
    u.check_mesh(mesh)?;
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(FemError::NonFinite { element: 0 }.into());
    }
    let m = mass(mesh, Coefficient::Constant(T::one()))?;
    Ok(m.matvec(u.values())?)
}

/// Factorised interior Dirichlet Laplacian.
#[derive(Debug, Clone)]
pub struct PoissonSolver<T> {
    a: CsrMatrix<T>,
    factor: LdlFactor<T>,
    tol: T,
}

impl<T: Real> PoissonSolver<T> {
    pub fn new(mesh: &StructuredMesh<T>, tol: T) -> Result<Self, ForwardError> {
        let k = stiffness(mesh, Coefficient::Constant(T::one()))?;
        let a = k.principal_submatrix(mesh.interior_indices());
        let factor = LdlFactor::new(&a)?;
        Ok(Self { a, factor, tol })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.a
    }

    /// Solves with a full-vertex load; returns a Dirichlet-tagged function.
    pub fn solve(
        &self,
        mesh: &StructuredMesh<T>,
        load: &[T],
    ) -> Result<NodalFunction<T>, ForwardError> {
        mesh.check_len(load.len())?;
        let b: Vec<T> = mesh.interior_indices().iter().map(|&v| load[v]).collect();
        let x = self.solve_interior(&b)?;
        Ok(NodalFunction::from_interior(mesh, &x)?)
    }

    pub fn solve_interior(&self, b: &[T]) -> Result<Vec<T>, ForwardError> {
        let (x, rn) = self.factor.solve_refined(&self.a, b, self.tol, 3)?;
        let bound = self.tol * norm2(b).max(T::one());
        if rn > bound {
            return Err(LinalgError::NotConverged {
                iterations: 3,
                residual: rn.to_f64_lossy(),
                tol: bound.to_f64_lossy(),
            }
            .into());
        }
        Ok(x)
    }
}

/// State for a full-vertex load via `-Δθ = load`, `y = K⁻¹(θ)`.
pub fn solve_state_kirchhoff_load<T: Real>(
    mesh: &StructuredMesh<T>,
    load: &[T],
) -> Result<NodalFunction<T>, ForwardError> {
    let solver = PoissonSolver::new(mesh, default_linear_tol::<T>())?;
    Ok(solver.solve(mesh, load)?.map(kirchhoff_inverse))
}

pub fn solve_state_kirchhoff<T: Real>(
    mesh: &StructuredMesh<T>,
    u: &NodalFunction<T>,
) -> Result<NodalFunction<T>, ForwardError> {
    solve_state_kirchhoff_load(mesh, &control_load(mesh, u)?)
}

/// Result of a converged Picard run.
#[derive(Debug, Clone)]
pub struct PicardOutcome<T> {
    pub y: NodalFunction<T>,
    pub iterations: usize,
    /// H¹ seminorm of each update.
    pub updates: Vec<T>,
}

/// Frozen-coefficient iteration `-div(a(y^m) ∇y^{m+1}) = load` from `y^0 = 0`.
pub fn picard_iterate<T: Real, A: Pc1Scalar<T>>(
    mesh: &StructuredMesh<T>,
    load: &[T],
    coeff: &A,
    tol: T,
    max_iter: usize,
) -> Result<PicardOutcome<T>, ForwardError> {
    mesh.check_len(load.len())?;
    let lin_tol = default_linear_tol::<T>();
    let b: Vec<T> = mesh.interior_indices().iter().map(|&v| load[v]).collect();
    let mut y = NodalFunction::zeros(mesh);
    let mut symbolic: Option<LdlSymbolic> = None;
    let mut updates = Vec::new();
    for it in 1..=max_iter {
        let values = y.values();
        let a_el: Vec<T> = (0..mesh.elements().len())
            .into_par_iter()
            .map(|e| coeff.eval(centroid_value(mesh, e, values)))
            .collect();
        let k = stiffness(mesh, Coefficient::PerElement(&a_el))?;
        let a = k.principal_submatrix(mesh.interior_indices());
        let sym = match symbolic.take() {
            Some(s) if s.matches(&a) => s,
            _ => LdlSymbolic::analyse(&a)?,
        };
        let factor = sym.factor(&a)?;
        symbolic = Some(sym);
        let (x, rn) = factor.solve_refined(&a, &b, lin_tol, 3)?;
        if rn > lin_tol * norm2(&b).max(T::one()) {
            return Err(LinalgError::NotConverged {
                iterations: 3,
                residual: rn.to_f64_lossy(),
                tol: lin_tol.to_f64_lossy(),
            }
            .into());
        }
        let next = NodalFunction::from_interior(mesh, &x)?;
        let diff: Vec<T> = next
            .values()
            .iter()
            .zip(y.values())
            .map(|(&a, &b)| a - b)
            .collect();
        let update = h1_seminorm_values(mesh, &diff);
        updates.push(update);
        if update <= tol {
            return Ok(PicardOutcome {
                y: next,
                iterations: it,
                updates,
            });
        }
        if it == max_iter {
            return Err(ForwardError::PicardNotConverged {
                iterations: it,
                update: update.to_f64_lossy(),
                last: next.values().iter().map(|v| v.to_f64_lossy()).collect(),
                previous: y.values().iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
        y = next;
    }
    unreachable!("max_iter validated to be at least one")
}

/// Picard solve for the coefficient `1 + |y|`, mollified when `epsilon > 0`.
pub fn solve_state_picard_load<T: Real>(
    mesh: &StructuredMesh<T>,
    load: &[T],
    cfg: &PicardConfig<T>,
) -> Result<PicardOutcome<T>, ForwardError> {
    cfg.validate()?;
    if cfg.epsilon > T::zero() {
        let a = mollify(abs_coefficient(), cfg.epsilon, MOLLIFIER_ORDER)?;
        picard_iterate(mesh, load, &a, cfg.tol, cfg.max_iter)
    } else {
        picard_iterate(mesh, load, &abs_coefficient(), cfg.tol, cfg.max_iter)
    }
}

pub fn solve_state_picard<T: Real>(
    mesh: &StructuredMesh<T>,
    u: &NodalFunction<T>,
    cfg: &PicardConfig<T>,
) -> Result<(NodalFunction<T>, usize), ForwardError> {
    let out = solve_state_picard_load(mesh, &control_load(mesh, u)?, cfg)?;
    Ok((out.y, out.iterations))
}

/// Interior matrix of `z ↦ -div((1 + |y|) ∇z + χ z ∇y)` together with a
/// preconditioner built from its symmetric diffusion part.
#[derive(Debug, Clone)]
pub struct LinearizedOperator<T> {
    matrix: CsrMatrix<T>,
    transpose: CsrMatrix<T>,
    precond: LdlFactor<T>,
    tol: T,
}

impl<T: Real> LinearizedOperator<T> {
    pub fn new(
        mesh: &StructuredMesh<T>,
        y: &NodalFunction<T>,
        chi: &NodalFunction<T>,
        tol: T,
    ) -> Result<Self, ForwardError> {
        y.check_mesh(mesh)?;
        chi.check_mesh(mesh)?;
        if chi.values().iter().any(|c| !(c.abs() <= T::one())) {
            return Err(ForwardError::InvalidConfig(
                "selection values must lie in [-1, 1]".into(),
            ));
        }
        let a = abs_coefficient();
        let a_el: Vec<T> = (0..mesh.elements().len())
            .map(|e| a.eval(centroid_value(mesh, e, y.values())))
            .collect();
        let k = stiffness(mesh, Coefficient::PerElement(&a_el))?;
        let c = coupling_matrix(mesh, y, chi)?;
        let keep = mesh.interior_indices();
        let k_i = k.principal_submatrix(keep);
        let matrix = k_i.add_scaled(T::one(), &c.principal_submatrix(keep))?;
        let precond = LdlFactor::new(&k_i)?;
        let transpose = matrix.transpose();
        Ok(Self {
            matrix,
            transpose,
            precond,
            tol,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    fn krylov(&self, m: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>, ForwardError> {
        let opts = GmresOptions {
            tol: self.tol,
            restart: 60,
            max_iter: 600,
        };
        let out = gmres(|v| m.matvec(v), |v| self.precond.solve(v), b, None, &opts)?;
        Ok(out.x)
    }

    /// Solves with the interior right-hand side `b`.
    pub fn solve_interior(&self, b: &[T]) -> Result<Vec<T>, ForwardError> {
        self.krylov(&self.matrix, b)
    }

    pub fn solve_adjoint_interior(&self, b: &[T]) -> Result<Vec<T>, ForwardError> {
        self.krylov(&self.transpose, b)
    }

    /// Interior rows of the transposed operator applied to a P1 function.
    pub fn apply_transpose(
        &self,
        mesh: &StructuredMesh<T>,
        w: &NodalFunction<T>,
    ) -> Result<Vec<T>, ForwardError> {
        w.check_mesh(mesh)?;
        Ok(self.transpose.matvec(&w.interior_values(mesh))?)
    }
}

fn restrict<T: Real>(mesh: &StructuredMesh<T>, load: &[T]) -> Result<Vec<T>, ForwardError> {
    mesh.check_len(load.len())?;
    Ok(mesh.interior_indices().iter().map(|&v| load[v]).collect())
}

/// Galerkin solution of `-div((1 + |y|) ∇z + χ z ∇y) = v` for a full-vertex load.
pub fn solve_linearized<T: Real>(
    mesh: &StructuredMesh<T>,
    y: &NodalFunction<T>,
    chi: &NodalFunction<T>,
    v: &[T],
) -> Result<NodalFunction<T>, ForwardError> {
    let op = LinearizedOperator::new(mesh, y, chi, T::lit(1e-12))?;
    let z = op.solve_interior(&restrict(mesh, v)?)?;
    Ok(NodalFunction::from_interior(mesh, &z)?)
}

/// Solves the transposed linearised system for a full-vertex load.
pub fn solve_adjoint<T: Real>(
    mesh: &StructuredMesh<T>,
    y: &NodalFunction<T>,
    chi: &NodalFunction<T>,
    rhs: &[T],
) -> Result<NodalFunction<T>, ForwardError> {
    let op = LinearizedOperator::new(mesh, y, chi, T::lit(1e-12))?;
    let w = op.solve_adjoint_interior(&restrict(mesh, rhs)?)?;
    Ok(NodalFunction::from_interior(mesh, &w)?)
}

/// Discrepancy `|(S(u + ρv) − S(u))/ρ − z|_{H¹}` for each `ρ`, where `z` is
/// the linearised response at `S(u)` with the fixed Clarke selection.
pub fn check_directional_derivative<T: Real>(
    mesh: &StructuredMesh<T>,
    u_load: &[T],
    v_load: &[T],
    rhos: &[T],
) -> Result<Vec<(T, T)>, ForwardError> {
    if rhos.iter().any(|&r| !(r > T::zero())) {
        return Err(ForwardError::InvalidConfig(
            "rho values must be positive".into(),
        ));
    }
    if rhos.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ForwardError::InvalidConfig(
            "rho values must be decreasing".into(),
        ));
    }
    mesh.check_len(u_load.len())?;
    mesh.check_len(v_load.len())?;
    let poisson = PoissonSolver::new(mesh, default_linear_tol::<T>())?;
    let state = |load: &[T]| -> Result<NodalFunction<T>, ForwardError> {
        Ok(poisson.solve(mesh, load)?.map(kirchhoff_inverse))
    };
    let y = state(u_load)?;
    let chi = clarke_field(&abs_coefficient(), &y);
    let z = solve_linearized(mesh, &y, &chi, v_load)?;
    let mut out = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let shifted: Vec<T> = u_load
            .iter()
            .zip(v_load)
            .map(|(&a, &b)| a + rho * b)
            .collect();
        let y_rho = state(&shifted)?;
        let diff: Vec<T> = y_rho
            .values()
            .iter()
            .zip(y.values())
            .zip(z.values())
            .map(|((&yr, &y0), &zz)| (yr - y0) / rho - zz)
            .collect();
        out.push((rho, h1_seminorm_values(mesh, &diff)));
    }
    Ok(out)
}

/// Unit-coefficient Dirichlet solve of a full-vertex system, exposed for tests
/// and diagnostics.
pub fn poisson_solve<T: Real>(
    mesh: &StructuredMesh<T>,
    load: &[T],
) -> Result<NodalFunction<T>, ForwardError> {
    let k = stiffness(mesh, Coefficient::Constant(T::one()))?;
    let (a, b) = apply_dirichlet(&k, load, mesh)?;
    let x = crate::linalg::solve_spd(&a, &b, default_linear_tol::<T>())?;
    Ok(NodalFunction::from_interior(mesh, &x)?)
}
