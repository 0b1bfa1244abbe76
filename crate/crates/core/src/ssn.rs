//! Semi-smooth Newton method for the reduced optimality system
//!
//! ```text
//! -Δψ + w/α = 0,    -Δw = f1(ψ) - y_d f2(ψ),
//! ```
//!
//! with state `y = K⁻¹(ψ)` and control `u = -w/α`. The iteration stops once
//! the vertex active sets `{ψ ≥ 0}` of two consecutive iterates coincide.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{
    at_quadrature, centroid_value, element_gradient, l2_norm_values, load_from_quadrature, mass,
    mass_quadrature, stiffness, Coefficient, FemError, NodalFunction,
};
use crate::forward::{ForwardError, LinearizedOperator};
use crate::grid::{MeshError, StructuredMesh};
use crate::linalg::{default_linear_tol, BlockSolver, BlockSystem, CsrMatrix, LinalgError};
use crate::nonsmooth::{abs_coefficient, f1, f2, kirchhoff_inverse, newton_weight, Pc1Scalar};
use crate::scalar::{norm2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsnError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton system failed at iterate {iterate}: {source}")]
    Step {
        iterate: usize,
        #[source]
        source: LinalgError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpConfig<T> {
    pub alpha: T,
    pub max_newton: usize,
    pub linear_tol: T,
    /// Initial `(w⁰, ψ⁰)`; zero when absent.
    pub start: Option<(NodalFunction<T>, NodalFunction<T>)>,
}

impl<T: Real> OcpConfig<T> {
    pub fn new(alpha: T) -> Self {
        Self {
            alpha,
            max_newton: 25,
            linear_tol: default_linear_tol::<T>(),
            start: None,
        }
    }

    pub fn validate(&self) -> Result<(), SsnError> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(SsnError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.max_newton == 0 {
            return Err(SsnError::InvalidConfig(
                "max_newton must be at least 1".into(),
            ));
        }
        if !(self.linear_tol > T::zero()) {
            return Err(SsnError::InvalidConfig(
                "linear_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsnState<T> {
    pub w: NodalFunction<T>,
    pub psi: NodalFunction<T>,
    pub active_set: Vec<bool>,
    pub iter: usize,
}

impl<T: Real> SsnState<T> {
    pub fn new(w: NodalFunction<T>, psi: NodalFunction<T>) -> Self {
        let active_set = active_set(&psi);
        Self {
            w,
            psi,
            active_set,
            iter: 0,
        }
    }

    pub fn zero(mesh: &StructuredMesh<T>) -> Self {
        Self::new(NodalFunction::zeros(mesh), NodalFunction::zeros(mesh))
    }
}

/// `{ψ_i ≥ 0}` on every vertex.
pub fn active_set<T: Real>(psi: &NodalFunction<T>) -> Vec<bool> {
    psi.values().iter().map(|&p| p >= T::zero()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsnReport {
    pub iterations: usize,
    pub converged: bool,
    /// `(‖r1‖, ‖r2‖)/h` after each step, interior Euclidean norms.
    pub residual_history: Vec<[f64; 2]>,
    pub active_set_changes: Vec<usize>,
    /// Whether the last residual fell below the linear tolerance; informative only.
    pub residual_small: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Operators shared by every Newton step on one mesh.
#[derive(Debug, Clone)]
pub struct OcpProblem<'m, T> {
    mesh: &'m StructuredMesh<T>,
    alpha: T,
    a: CsrMatrix<T>,
    m: CsrMatrix<T>,
    yd: NodalFunction<T>,
    yd_q: Vec<[T; 3]>,
}

impl<'m, T: Real> OcpProblem<'m, T> {
    pub fn new(
        mesh: &'m StructuredMesh<T>,
        alpha: T,
        yd: &NodalFunction<T>,
    ) -> Result<Self, SsnError> {
        yd.check_mesh(mesh)?;
        let keep = mesh.interior_indices();
        let a = stiffness(mesh, Coefficient::Constant(T::one()))?.principal_submatrix(keep);
        let m = mass(mesh, Coefficient::Constant(T::one()))?.principal_submatrix(keep);
        Ok(Self {
            mesh,
            alpha,
            a,
            m,
            yd: yd.clone(),
            yd_q: at_quadrature(mesh, yd.values()),
        })
    }

    pub fn mesh(&self) -> &StructuredMesh<T> {
        self.mesh
    }

    pub fn yd(&self) -> &NodalFunction<T> {
        &self.yd
    }

    /// Interior residuals `(r1, r2)`.
    pub fn residual(&self, state: &SsnState<T>) -> Result<(Vec<T>, Vec<T>), SsnError> {
        state.w.check_mesh(self.mesh)?;
        state.psi.check_mesh(self.mesh)?;
        let psi = state.psi.interior_values(self.mesh);
        let w = state.w.interior_values(self.mesh);
        let inv_alpha = T::one() / self.alpha;
        let ap = self.a.matvec(&psi).map_err(FemError::from)?;
        let mw = self.m.matvec(&w).map_err(FemError::from)?;
        let r1 = ap
            .iter()
            .zip(&mw)
            .map(|(&a, &b)| a + inv_alpha * b)
            .collect();
        let psi_q = at_quadrature(self.mesh, state.psi.values());
        let g: Vec<[T; 3]> = psi_q
            .iter()
            .zip(&self.yd_q)
            .map(|(p, d)| std::array::from_fn(|q| f1(p[q]) - d[q] * f2(p[q])))
            .collect();
        let load = load_from_quadrature(self.mesh, &g)?;
        let aw = self.a.matvec(&w).map_err(FemError::from)?;
        let r2 = self
            .mesh
            .interior_indices()
            .iter()
            .zip(&aw)
            .map(|(&v, &x)| x - load[v])
            .collect();
        Ok((r1, r2))
    }

    /// The Newton matrix blocks at `state`, with the given residuals.
    pub fn block_system(
        &self,
        state: &SsnState<T>,
        r1: Vec<T>,
        r2: Vec<T>,
    ) -> Result<BlockSystem<T>, SsnError> {
        let psi_q = at_quadrature(self.mesh, state.psi.values());
        let d: Vec<[T; 3]> = psi_q
            .iter()
            .zip(&self.yd_q)
            .map(|(p, y)| std::array::from_fn(|q| newton_weight(p[q], y[q])))
            .collect();
        let m_d = mass_quadrature(self.mesh, &d)?.principal_submatrix(self.mesh.interior_indices());
        Ok(BlockSystem {
            m_alpha: self.m.scaled(T::one() / self.alpha),
            a: self.a.clone(),
            m_d,
            r1,
            r2,
        })
    }

    /// One Newton update; returns `(δw, δψ, active set of ψ + δψ)` on the full
    /// vertex set.
    pub fn newton_step(
        &self,
        state: &SsnState<T>,
        solver: &mut BlockSolver,
        tol: T,
    ) -> Result<(NodalFunction<T>, NodalFunction<T>, Vec<bool>), SsnError> {
        let (r1, r2) = self.residual(state)?;
        let sys = self.block_system(state, r1, r2)?;
        let (dw, dpsi) = solver.solve(&sys, tol).map_err(|source| SsnError::Step {
            iterate: state.iter,
            source,
        })?;
        let dw = NodalFunction::from_interior(self.mesh, &dw)?;
        let dpsi = NodalFunction::from_interior(self.mesh, &dpsi)?;
        let next = state.psi.zip_map(&dpsi, |a, b| a + b)?;
        Ok((dw, dpsi, active_set(&next)))
    }
}

pub fn residual<T: Real>(
    mesh: &StructuredMesh<T>,
    state: &SsnState<T>,
    cfg: &OcpConfig<T>,
    yd: &NodalFunction<T>,
) -> Result<(Vec<T>, Vec<T>), SsnError> {
    cfg.validate()?;
    OcpProblem::new(mesh, cfg.alpha, yd)?.residual(state)
}

pub fn newton_step<T: Real>(
    mesh: &StructuredMesh<T>,
    state: &SsnState<T>,
    cfg: &OcpConfig<T>,
    yd: &NodalFunction<T>,
) -> Result<(NodalFunction<T>, NodalFunction<T>, Vec<bool>), SsnError> {
    cfg.validate()?;
    OcpProblem::new(mesh, cfg.alpha, yd)?.newton_step(
        state,
        &mut BlockSolver::new(),
        cfg.linear_tol,
    )
}

#[derive(Debug, Clone)]
pub struct OcpSolution<T> {
    pub y: NodalFunction<T>,
    pub u: NodalFunction<T>,
    pub w: NodalFunction<T>,
    pub psi: NodalFunction<T>,
    pub report: SsnReport,
}

/// A failed run together with everything computed before the failure.
#[derive(Debug, Clone, Error)]
#[error("{cause}")]
pub struct OcpFailure<T: std::fmt::Debug> {
    pub cause: SsnError,
    pub report: SsnReport,
    pub last_state: Option<SsnState<T>>,
}

pub fn solve_ocp<T: Real>(
    mesh: &StructuredMesh<T>,
    cfg: &OcpConfig<T>,
    yd: &NodalFunction<T>,
) -> Result<OcpSolution<T>, OcpFailure<T>> {
    let mut report = SsnReport {
        iterations: 0,
        converged: false,
        residual_history: Vec::new(),
        active_set_changes: Vec::new(),
        residual_small: false,
        failure: None,
    };
    let fail = |cause: SsnError, mut report: SsnReport, last_state| {
        report.failure = Some(cause.to_string());
        OcpFailure {
            cause,
            report,
            last_state,
        }
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, report, None));
    }
    let problem = match OcpProblem::new(mesh, cfg.alpha, yd) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, report, None)),
    };
    let mut state = match &cfg.start {
        Some((w, psi)) => {
            let ok = w.check_mesh(mesh).and(psi.check_mesh(mesh));
            if let Err(e) = ok {
                return Err(fail(e.into(), report, None));
            }
            let w =
                NodalFunction::from_interior(mesh, &w.interior_values(mesh)).expect("sizes match");
            let psi = NodalFunction::from_interior(mesh, &psi.interior_values(mesh))
                .expect("sizes match");
            SsnState::new(w, psi)
        }
        None => SsnState::zero(mesh),
    };
    let inv_h = T::one() / mesh.h();
    let mut solver = BlockSolver::new();
    while state.iter < cfg.max_newton {
        let step = problem.newton_step(&state, &mut solver, cfg.linear_tol);
        let (dw, dpsi, next_active) = match step {
            Ok(s) => s,
            Err(e) => return Err(fail(e, report, Some(state))),
        };
        state.w = state.w.zip_map(&dw, |a, b| a + b).expect("same mesh");
        state.psi = state.psi.zip_map(&dpsi, |a, b| a + b).expect("same mesh");
        state.iter += 1;
        let changes = next_active
            .iter()
            .zip(&state.active_set)
            .filter(|(a, b)| a != b)
            .count();
        state.active_set = next_active;
        match problem.residual(&state) {
            Ok((r1, r2)) => {
                let pair = [norm2(&r1) * inv_h, norm2(&r2) * inv_h];
                report.residual_history.push(pair.map(|v| v.to_f64_lossy()));
                report.residual_small = norm2(&r1).max(norm2(&r2)) <= cfg.linear_tol;
            }
            Err(e) => return Err(fail(e, report, Some(state))),
        }
        report.active_set_changes.push(changes);
        report.iterations = state.iter;
        if changes == 0 {
            report.converged = true;
            break;
        }
    }
    let y = state.psi.map(kirchhoff_inverse);
    let u = recover_control(&state.w, cfg.alpha);
    Ok(OcpSolution {
        y,
        u,
        w: state.w,
        psi: state.psi,
        report,
    })
}

/// `u = -w/α` nodewise.
pub fn recover_control<T: Real>(w: &NodalFunction<T>, alpha: T) -> NodalFunction<T> {
    w.map(|v| -v / alpha)
}

/// Residuals of the adjoint equation and of the gradient equation
/// `w + αu = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityResiduals {
    /// Interior Euclidean norm of `Lᵀw − load(y − y_d)`.
    pub adjoint_res: f64,
    /// `L²` norm of `w + αu`.
    pub gradient_res: f64,
    /// Interior Euclidean norm of `load(y − y_d)`, the scale of the adjoint residual.
    pub load_norm: f64,
}

pub fn stationarity_residuals<T: Real>(
    mesh: &StructuredMesh<T>,
    y: &NodalFunction<T>,
    u: &NodalFunction<T>,
    w: &NodalFunction<T>,
    chi: &NodalFunction<T>,
    alpha: T,
    yd: &NodalFunction<T>,
) -> Result<StationarityResiduals, SsnError> {
    for f in [y, u, w, chi, yd] {
        f.check_mesh(mesh)?;
    }
    let op = LinearizedOperator::new(mesh, y, chi, default_linear_tol::<T>())?;
    let ltw = op.apply_transpose(mesh, w)?;
    let diff = y.sub(yd)?;
    let load = load_from_quadrature(mesh, &at_quadrature(mesh, diff.values()))?;
    let load_i: Vec<T> = mesh.interior_indices().iter().map(|&v| load[v]).collect();
    let res: Vec<T> = ltw.iter().zip(&load_i).map(|(&a, &b)| a - b).collect();
    let grad = w.zip_map(u, |wi, ui| wi + alpha * ui)?;
    Ok(StationarityResiduals {
        adjoint_res: norm2(&res).to_f64_lossy(),
        gradient_res: l2_norm_values(mesh, grad.values()).to_f64_lossy(),
        load_norm: norm2(&load_i).to_f64_lossy(),
    })
}

/// `max over elements and κ of (a'(y; κ) − χκ) ∇y·∇w`, evaluated at centroids.
pub fn strong_stationarity_check<T: Real>(
    mesh: &StructuredMesh<T>,
    y: &NodalFunction<T>,
    w: &NodalFunction<T>,
    chi: &NodalFunction<T>,
    kappas: &[T],
) -> Result<T, SsnError> {
    if kappas.is_empty() {
        return Err(SsnError::InvalidConfig(
            "kappa list must be nonempty".into(),
        ));
    }
    for f in [y, w, chi] {
        f.check_mesh(mesh)?;
    }
    let a = abs_coefficient();
    let mut worst = T::neg_infinity();
    for e in 0..mesh.elements().len() {
        let yc = centroid_value(mesh, e, y.values());
        let cc = centroid_value(mesh, e, chi.values());
        let gy = element_gradient(mesh, e, y.values());
        let gw = element_gradient(mesh, e, w.values());
        let flux = gy[0] * gw[0] + gy[1] * gw[1];
        for &k in kappas {
            let v = (a.dir_deriv(yc, k) - cc * k) * flux;
            if v > worst {
                worst = v;
            }
        }
    }
    Ok(worst)
}
