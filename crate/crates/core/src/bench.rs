//! Benchmark harness for the manufactured test problem: single runs, sweeps
//! over `(n_h, α, β)` and CSV output.
//!
//! Here `n_h` counts grid cells per side, so a row with `n_h = 100` runs on a
//! mesh with `101 × 101` vertices and `h = 1/100`.

use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{h1_seminorm_values, linf_norm, FemError, NodalFunction};
use crate::forward::{check_directional_derivative, control_load, ForwardError, MOLLIFIER_ORDER};
use crate::grid::{MeshError, StructuredMesh};
use crate::manufactured::{CaseError, ManufacturedCase};
use crate::nonsmooth::{
    abs_coefficient, clarke_field, f1, f2, kirchhoff, kirchhoff_inverse, mollify, NonsmoothError,
    Pc1Scalar,
};
use crate::ssn::{solve_ocp, stationarity_residuals, OcpConfig, SsnError, SsnReport};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("sweep needs at least one row")]
    EmptySweep,
    #[error("at least 100 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Nonsmooth(#[from] NonsmoothError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Ssn(#[from] SsnError),
    #[error("optimal control solve failed: {0}")]
    Solve(String),
}

/// Column order of the CSV output.
pub const CSV_HEADER: &str = "n_h,alpha,beta,rel_err_y,rel_err_w,ssn_iters,yd_linf,wall_time";

/// Maximum residuals of the manufactured identities at sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedResiduals {
    /// `max |−Δψ̄ + w̄/α|` with a five-point difference Laplacian.
    pub state_identity: f64,
    /// `max |−Δw̄ − (ȳ − y_d)/(1 + |ȳ|)|` with the same stencil.
    pub adjoint_identity: f64,
    /// `max |f1(ψ̄) − y_d f2(ψ̄) − (ȳ − y_d)/(1 + |ȳ|)|`.
    pub algebraic: f64,
    /// Largest residual among samples with `x1 > β`.
    pub zero_region: f64,
}

/// Difference step of the Laplacian stencil.
pub const FD_STEP: f64 = 1e-4;

/// Samples the identities at random points at least `1e-3` away from the
/// interfaces `x1 = β − 1/2` and `x1 = β`.
pub fn verify_manufactured(
    case: &ManufacturedCase,
    n_samples: usize,
    seed: u64,
) -> Result<ManufacturedResiduals, BenchError> {
    if n_samples < 100 {
        return Err(BenchError::TooFewSamples(n_samples));
    }
    let beta = case.beta();
    let alpha = case.alpha();
    let h = FD_STEP;
    let lap = |f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64| {
        (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ManufacturedResiduals {
        state_identity: 0.0,
        adjoint_identity: 0.0,
        algebraic: 0.0,
        zero_region: 0.0,
    };
    let mut taken = 0;
    while taken < n_samples {
        let x1: f64 = rng.gen_range(0.01..0.99);
        let x2: f64 = rng.gen_range(0.01..0.99);
        if (x1 - (beta - 0.5)).abs() <= 1e-3 || (x1 - beta).abs() <= 1e-3 {
            continue;
        }
        taken += 1;
        let e = case.eval(x1, x2);
        let r1 = (-lap(&|a, b| case.psi(a, b), x1, x2) + e.w / alpha).abs();
        let target = (e.y - e.yd) / (1.0 + e.y.abs());
        let r2 = (-lap(&|a, b| case.w(a, b), x1, x2) - target).abs();
        let r3 = (f1(e.psi) - e.yd * f2(e.psi) - target).abs();
        out.state_identity = out.state_identity.max(r1);
        out.adjoint_identity = out.adjoint_identity.max(r2);
        out.algebraic = out.algebraic.max(r3);
        if x1 > beta {
            out.zero_region = out.zero_region.max(r1).max(r2).max(r3);
        }
    }
    Ok(out)
}

/// Fraction of mesh vertices where `ψ̄` vanishes.
pub fn zero_fraction(case: &ManufacturedCase, mesh: &StructuredMesh<f64>) -> f64 {
    let zeros = (0..mesh.vertex_count())
        .filter(|&v| {
            let (x, y) = mesh.coords(v);
            case.psi(x, y) == 0.0
        })
        .count();
    zeros as f64 / mesh.vertex_count() as f64
}

/// Overrides of the solver defaults for a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOverrides {
    pub max_newton: Option<usize>,
    pub linear_tol: Option<f64>,
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_h: usize,
    pub alpha: f64,
    pub beta: f64,
    pub rel_err_y: f64,
    pub rel_err_w: f64,
    pub ssn_iters: usize,
    pub converged: bool,
    pub yd_linf: f64,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SsnReport>,
}

impl RunRecord {
    fn failed(n_h: usize, alpha: f64, beta: f64, msg: String, wall_time: f64) -> Self {
        Self {
            n_h,
            alpha,
            beta,
            rel_err_y: f64::NAN,
            rel_err_w: f64::NAN,
            ssn_iters: 0,
            converged: false,
            yd_linf: f64::NAN,
            wall_time,
            error: Some(msg),
            report: None,
        }
    }
}

/// Everything produced by a run, for callers that want the fields as well.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub mesh: StructuredMesh<f64>,
    pub case: ManufacturedCase,
    pub record: RunRecord,
    pub solution: Option<crate::ssn::OcpSolution<f64>>,
    pub yd: NodalFunction<f64>,
}

/// `|a − b|_{H¹} / |b|_{H¹}`.
pub fn relative_h1_error(
    mesh: &StructuredMesh<f64>,
    approx: &NodalFunction<f64>,
    exact: &NodalFunction<f64>,
) -> f64 {
    let diff: Vec<f64> = approx
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| a - b)
        .collect();
    h1_seminorm_values(mesh, &diff) / h1_seminorm_values(mesh, exact.values())
}

pub fn run_case_full(
    n_h: usize,
    alpha: f64,
    beta: f64,
    overrides: &RunOverrides,
) -> Result<RunArtifacts, BenchError> {
    let start = Instant::now();
    let case = ManufacturedCase::new(alpha, beta)?;
    let mesh = match StructuredMesh::with_cells(n_h) {
        Ok(m) => m,
        Err(e) => {
            let record = RunRecord::failed(n_h, alpha, beta, e.to_string(), 0.0);
            let mesh = StructuredMesh::with_cells(2).expect("valid mesh");
            let yd = NodalFunction::zeros(&mesh);
            return Ok(RunArtifacts {
                mesh,
                case,
                record,
                solution: None,
                yd,
            });
        }
    };
    let yd = NodalFunction::interpolate(&mesh, |x, y| case.yd(x, y));
    let mut cfg = OcpConfig::new(alpha);
    if let Some(k) = overrides.max_newton {
        cfg.max_newton = k;
    }
    if let Some(t) = overrides.linear_tol {
        cfg.linear_tol = t;
    }
    let yd_linf = linf_norm(&yd);
    let (record, solution) = match solve_ocp(&mesh, &cfg, &yd) {
        Ok(sol) => {
            let y_ex = NodalFunction::interpolate(&mesh, |x, y| case.y(x, y));
            let w_ex = NodalFunction::interpolate(&mesh, |x, y| case.w(x, y));
            let record = RunRecord {
                n_h,
                alpha,
                beta,
                rel_err_y: relative_h1_error(&mesh, &sol.y, &y_ex),
                rel_err_w: relative_h1_error(&mesh, &sol.w, &w_ex),
                ssn_iters: sol.report.iterations,
                converged: sol.report.converged,
                yd_linf,
                wall_time: start.elapsed().as_secs_f64(),
                error: None,
                report: Some(sol.report.clone()),
            };
            (record, Some(sol))
        }
        Err(fail) => {
            let mut record = RunRecord::failed(
                n_h,
                alpha,
                beta,
                fail.cause.to_string(),
                start.elapsed().as_secs_f64(),
            );
            record.ssn_iters = fail.report.iterations;
            record.yd_linf = yd_linf;
            record.report = Some(fail.report);
            (record, None)
        }
    };
    Ok(RunArtifacts {
        mesh,
        case,
        record,
        solution,
        yd,
    })
}

/// Runs one manufactured case; solver failures end up in the record.
pub fn run_case(
    n_h: usize,
    alpha: f64,
    beta: f64,
    overrides: &RunOverrides,
) -> Result<RunRecord, BenchError> {
    Ok(run_case_full(n_h, alpha, beta, overrides)?.record)
}

/// Worker count from `QCT_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("QCT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every row, possibly in parallel; output follows input order.
pub fn sweep(
    rows: &[(usize, f64, f64)],
    overrides: &RunOverrides,
) -> Result<Vec<RunRecord>, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::EmptySweep);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| BenchError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| {
        rows.par_iter()
            .map(|&(n, a, b)| match run_case(n, a, b, overrides) {
                Ok(r) => r,
                Err(e) => RunRecord::failed(n, a, b, e.to_string(), 0.0),
            })
            .collect()
    }))
}

/// Twelve significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn write_csv<W: Write>(records: &[RunRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n_h,
            fmt_num(r.alpha),
            fmt_num(r.beta),
            fmt_num(r.rel_err_y),
            fmt_num(r.rel_err_w),
            r.ssn_iters,
            fmt_num(r.yd_linf),
            fmt_num(r.wall_time)
        )?;
    }
    Ok(())
}

/// Worst deviations of the mollified coefficient from its defining bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierDefects {
    pub epsilon: f64,
    /// `min a_ε(t)` over the samples; must be at least one.
    pub min_value: f64,
    /// `max |a_ε(t) − a(t)|` over samples with `|t| ≥ ε`.
    pub gap_outside: f64,
    /// `max |a_ε(t) − a(t)|` over all samples.
    pub gap: f64,
}

/// Samples `a_ε` for `a = 1 + |t|` on `n` points of `[−1, 1]` and `n` points of
/// `[−2ε, 2ε]`, including `±ε`.
pub fn mollifier_defects(epsilon: f64, n: usize) -> Result<MollifierDefects, BenchError> {
    let base = abs_coefficient();
    let a = mollify(base, epsilon, MOLLIFIER_ORDER)?;
    let n = n.max(3);
    let wide = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
    let near = (0..n).map(|i| epsilon * (-2.0 + 4.0 * i as f64 / (n - 1) as f64));
    let mut out = MollifierDefects {
        epsilon,
        min_value: f64::INFINITY,
        gap_outside: 0.0,
        gap: 0.0,
    };
    for t in wide.chain(near).chain([-epsilon, epsilon]) {
        let v = a.eval(t);
        let gap = (v - Pc1Scalar::<f64>::eval(&base, t)).abs();
        out.min_value = out.min_value.min(v);
        out.gap = out.gap.max(gap);
        if t.abs() >= epsilon {
            out.gap_outside = out.gap_outside.max(gap);
        }
    }
    Ok(out)
}

/// `max |K⁻¹(K(t)) − t|` over `n` uniform samples of `[−range, range]`.
pub fn kirchhoff_round_trip(n: usize, range: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t: f64 = rng.gen_range(-range..=range);
            (kirchhoff_inverse(kirchhoff(t)) - t).abs()
        })
        .fold(0.0, f64::max)
}

/// Finite-difference check of the directional derivative of the control to
/// state map at the manufactured control along `v = sin(πx1) sin(πx2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeStudy {
    /// `(ρ, |(S(u + ρv) − S(u))/ρ − S'(u; v)|_{H¹})` for decreasing `ρ`.
    pub points: Vec<(f64, f64)>,
    /// Smallest discrepancy over all `ρ`, taken as the discretisation floor.
    pub floor: f64,
    /// `|S'(u; v)|_{H¹}`.
    pub derivative_norm: f64,
}

impl DerivativeStudy {
    /// Whether the discrepancy drops by `factor` per step over the first
    /// `steps + 1` values of `ρ`, except for steps that already end within
    /// twice the floor.
    pub fn decays(&self, steps: usize, factor: f64) -> bool {
        if self.points.len() < steps + 1 {
            return false;
        }
        self.points[..=steps]
            .windows(2)
            .all(|w| w[1].1 * factor <= w[0].1 || w[1].1 <= 2.0 * self.floor)
    }
}

pub fn directional_derivative_study(
    n_h: usize,
    alpha: f64,
    beta: f64,
    rhos: &[f64],
) -> Result<DerivativeStudy, BenchError> {
    let case = ManufacturedCase::new(alpha, beta)?;
    let mesh = StructuredMesh::with_cells(n_h)?;
    let u = NodalFunction::interpolate(&mesh, |x, y| case.u(x, y));
    let v = NodalFunction::interpolate(&mesh, |x, y| {
        (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
    });
    let u_load = control_load(&mesh, &u)?;
    let v_load = control_load(&mesh, &v)?;
    let points = check_directional_derivative(&mesh, &u_load, &v_load, rhos)?;
    let floor = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y = crate::forward::solve_state_kirchhoff_load(&mesh, &u_load)?;
    let chi = clarke_field(&abs_coefficient(), &y);
    let z = crate::forward::solve_linearized(&mesh, &y, &chi, &v_load)?;
    Ok(DerivativeStudy {
        points,
        floor,
        derivative_norm: h1_seminorm_values(&mesh, z.values()),
    })
}

/// Effect of flipping the Clarke selection where the computed state is
/// indistinguishable from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionFlip {
    /// Vertices with `|y_h| ≤ ‖y_h − I_h ȳ‖_∞`, where the selection is flipped.
    pub flipped: usize,
    pub adjoint_res: f64,
    pub adjoint_res_flipped: f64,
    /// `h · ‖load(y_h − y_d)‖`, the size of an O(h) consistency error in the
    /// discrete adjoint residual.
    pub fe_scale: f64,
}

impl SelectionFlip {
    pub fn change(&self) -> f64 {
        (self.adjoint_res_flipped - self.adjoint_res).abs()
    }
}

pub fn selection_flip(n_h: usize, alpha: f64, beta: f64) -> Result<SelectionFlip, BenchError> {
    let run = run_case_full(n_h, alpha, beta, &RunOverrides::default())?;
    let Some(sol) = run.solution else {
        return Err(BenchError::Solve(
            run.record.error.unwrap_or_else(|| "no solution".into()),
        ));
    };
    let mesh = &run.mesh;
    let y_ex = NodalFunction::interpolate(mesh, |x, y| run.case.y(x, y));
    let eta = sol
        .y
        .values()
        .iter()
        .zip(y_ex.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let chi = clarke_field(&abs_coefficient(), &sol.y);
    let flipped = sol.y.values().iter().filter(|y| y.abs() <= eta).count();
    let chi_flip = chi.zip_map(&sol.y, |c, y| if y.abs() <= eta { -c } else { c })?;
    let base = stationarity_residuals(mesh, &sol.y, &sol.u, &sol.w, &chi, alpha, &run.yd)?;
    let flip = stationarity_residuals(mesh, &sol.y, &sol.u, &sol.w, &chi_flip, alpha, &run.yd)?;
    Ok(SelectionFlip {
        flipped,
        adjoint_res: base.adjoint_res,
        adjoint_res_flipped: flip.adjoint_res,
        fe_scale: mesh.h() * base.load_norm,
    })
}

/// `|fraction of vertices with ψ̄ = 0 − (1 − β)|`, allowing for the boundary
/// rows and the column on `x1 = β`.
pub fn zero_fraction_defect(case: &ManufacturedCase, mesh: &StructuredMesh<f64>) -> f64 {
    (zero_fraction(case, mesh) - (1.0 - case.beta())).abs()
}
