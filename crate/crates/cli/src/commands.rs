//! The four subcommands.

use std::fs;
use std::io::Write;

use qct_core::bench::{
    directional_derivative_study, kirchhoff_round_trip, mollifier_defects, relative_h1_error,
    sweep, verify_manufactured, write_csv, zero_fraction_defect, RunOverrides,
};
use qct_core::fem::{h1_seminorm, l2_norm, linf_norm};
use qct_core::forward::{solve_state_kirchhoff, solve_state_picard, PicardConfig};
use qct_core::manufactured::ManufacturedCase;
use qct_core::nonsmooth::{abs_coefficient, clarke_field};
use qct_core::ssn::{solve_ocp, stationarity_residuals, OcpConfig};
use qct_core::{Mesh, NodalFunction};
use serde_json::{json, Value};

use crate::args::{CheckArgs, Format, OcpArgs, Problem, StateArgs, TableArgs};
use crate::error::CliError;
use crate::fields::{dump_field, ensure_dir, num, round_floats, write_json_file, FieldSpec};

fn mesh(n_h: usize) -> Result<Mesh, CliError> {
    if n_h < 2 {
        return Err(CliError::InvalidArgument(format!(
            "--nh must be at least 2, got {n_h}"
        )));
    }
    Mesh::with_cells(n_h).map_err(|e| CliError::InvalidArgument(e.to_string()))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::InvalidArgument(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

fn case(p: &Problem) -> Result<ManufacturedCase, CliError> {
    ManufacturedCase::new(p.alpha, p.beta).map_err(|e| CliError::InvalidArgument(e.to_string()))
}

fn solver(e: impl std::fmt::Display) -> CliError {
    CliError::Solver {
        message: e.to_string(),
        report: None,
    }
}

fn print_json(out: &mut dyn Write, doc: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialise");
    writeln!(out, "{text}").map_err(|e| CliError::io("<stdout>", e))
}

pub fn state(args: &StateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mesh = mesh(args.problem.n_h)?;
    if !(args.epsilon >= 0.0 && args.epsilon.is_finite()) {
        return Err(CliError::InvalidArgument(format!(
            "--eps must be non-negative, got {}",
            args.epsilon
        )));
    }
    let control = FieldSpec::parse(&args.control, "u")?;
    let case = match control {
        FieldSpec::Manufactured => Some(case(&args.problem)?),
        _ => None,
    };
    let u = control.interpolate(&mesh, case.as_ref(), ManufacturedCase::u, "u")?;
    let (y, picard_iterations) = if args.epsilon > 0.0 {
        let cfg = PicardConfig {
            tol: positive("tol", args.tol)?,
            max_iter: args.max_iter,
            epsilon: args.epsilon,
        };
        if cfg.max_iter == 0 {
            return Err(CliError::InvalidArgument(
                "--max-iter must be at least 1".into(),
            ));
        }
        let (y, it) = solve_state_picard(&mesh, &u, &cfg).map_err(solver)?;
        (y, Some(it))
    } else {
        (solve_state_kirchhoff(&mesh, &u).map_err(solver)?, None)
    };
    let rel_err = case.as_ref().map(|c| {
        let exact = NodalFunction::interpolate(&mesh, |a, b| c.y(a, b));
        relative_h1_error(&mesh, &y, &exact)
    });

    let mut files = Vec::new();
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        files.push(dump_field(dir, "y", &mesh, &y, args.format)?);
    }
    let mut doc = json!({
        "command": "state",
        "n_h": args.problem.n_h,
        "h": num(mesh.h()),
        "control": control.label(),
        "solver": if picard_iterations.is_some() { "picard" } else { "kirchhoff" },
        "epsilon": num(args.epsilon),
        "picard_iterations": picard_iterations,
        "norms": {
            "y_h1": num(h1_seminorm(&mesh, &y)),
            "y_l2": num(l2_norm(&mesh, &y)),
            "y_linf": num(linf_norm(&y)),
            "u_l2": num(l2_norm(&mesh, &u)),
        },
        "rel_err_h1": rel_err.map(num),
    });
    if case.is_some() {
        doc["alpha"] = num(args.problem.alpha);
        doc["beta"] = num(args.problem.beta);
    }
    if let Some(dir) = &args.out {
        let path = dir.join("summary.json");
        files.push(path.display().to_string());
        doc["files"] = json!(files);
        write_json_file(&path, &doc)?;
    }
    print_json(out, &doc)
}

pub fn ocp(args: &OcpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mesh = mesh(args.problem.n_h)?;
    let alpha = positive("alpha", args.problem.alpha)?;
    let tol = positive("tol", args.tol)?;
    if args.max_iter == 0 {
        return Err(CliError::InvalidArgument(
            "--max-iter must be at least 1".into(),
        ));
    }
    let target = FieldSpec::parse(&args.target, "yd")?;
    let case = match target {
        FieldSpec::Manufactured => Some(case(&args.problem)?),
        _ => None,
    };
    let yd = target.interpolate(&mesh, case.as_ref(), ManufacturedCase::yd, "yd")?;
    let mut cfg = OcpConfig::new(alpha);
    cfg.max_newton = args.max_iter;
    cfg.linear_tol = tol;

    let sol = match solve_ocp(&mesh, &cfg, &yd) {
        Ok(sol) => sol,
        Err(fail) => {
            let mut report = serde_json::to_value(&fail.report).expect("report serialises");
            round_floats(&mut report);
            return Err(CliError::Solver {
                message: fail.cause.to_string(),
                report: Some(report),
            });
        }
    };
    let chi = clarke_field(&abs_coefficient(), &sol.y);
    let stationarity =
        stationarity_residuals(&mesh, &sol.y, &sol.u, &sol.w, &chi, alpha, &yd).map_err(solver)?;
    let errors = case.as_ref().map(|c| {
        let y_ex = NodalFunction::interpolate(&mesh, |a, b| c.y(a, b));
        let w_ex = NodalFunction::interpolate(&mesh, |a, b| c.w(a, b));
        json!({
            "rel_err_y": relative_h1_error(&mesh, &sol.y, &y_ex),
            "rel_err_w": relative_h1_error(&mesh, &sol.w, &w_ex),
        })
    });

    let mut files = Vec::new();
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        for (name, f) in [
            ("y", &sol.y),
            ("u", &sol.u),
            ("w", &sol.w),
            ("psi", &sol.psi),
        ] {
            files.push(dump_field(dir, name, &mesh, f, args.format)?);
        }
    }
    let mut doc = json!({
        "command": "ocp",
        "n_h": args.problem.n_h,
        "h": mesh.h(),
        "alpha": alpha,
        "target": target.label(),
        "yd_linf": linf_norm(&yd),
        "report": sol.report,
        "stationarity": stationarity,
        "errors": errors,
        "norms": {
            "y_h1": h1_seminorm(&mesh, &sol.y),
            "u_l2": l2_norm(&mesh, &sol.u),
            "w_h1": h1_seminorm(&mesh, &sol.w),
        },
    });
    if case.is_some() {
        doc["beta"] = json!(args.problem.beta);
    }
    round_floats(&mut doc);
    if let Some(dir) = &args.out {
        let path = dir.join("report.json");
        files.push(path.display().to_string());
        doc["files"] = json!(files);
        write_json_file(&path, &doc)?;
    }
    print_json(out, &doc)
}

/// One parsed row of a table spec, with its 1-based line number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecRow {
    pub line: usize,
    pub n_h: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Parses `n_h alpha beta` rows; `#` starts a comment. A spec without rows is
/// reported at line 0.
pub fn parse_spec(text: &str) -> Result<Vec<SpecRow>, CliError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let bad = |message: String| CliError::Spec { line, message };
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad(format!(
                "expected `n_h alpha beta`, found {} field(s)",
                fields.len()
            )));
        }
        let n_h: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("n_h must be a whole number, got '{}'", fields[0])))?;
        let alpha: f64 = fields[1]
            .parse()
            .map_err(|_| bad(format!("alpha must be a number, got '{}'", fields[1])))?;
        let beta: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("beta must be a number, got '{}'", fields[2])))?;
        if n_h < 2 {
            return Err(bad(format!("n_h must be at least 2, got {n_h}")));
        }
        ManufacturedCase::new(alpha, beta).map_err(|e| bad(e.to_string()))?;
        rows.push(SpecRow {
            line,
            n_h,
            alpha,
            beta,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Spec {
            line: 0,
            message: "spec contains no rows".into(),
        });
    }
    Ok(rows)
}

pub fn table(args: &TableArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.format == Format::Xyz {
        return Err(CliError::InvalidArgument(
            "table output must be csv or json".into(),
        ));
    }
    let overrides = RunOverrides {
        max_newton: match args.max_iter {
            Some(0) => {
                return Err(CliError::InvalidArgument(
                    "--max-iter must be at least 1".into(),
                ))
            }
            k => k,
        },
        linear_tol: args.tol.map(|t| positive("tol", t)).transpose()?,
    };
    let text = fs::read_to_string(&args.spec).map_err(|e| CliError::io(args.spec.display(), e))?;
    let rows = parse_spec(&text)?;
    let triples: Vec<_> = rows.iter().map(|r| (r.n_h, r.alpha, r.beta)).collect();
    let records = sweep(&triples, &overrides).map_err(solver)?;

    let mut buf = Vec::new();
    match args.format {
        Format::Json => {
            let mut doc = serde_json::to_value(&records).expect("records serialise");
            round_floats(&mut doc);
            let text = serde_json::to_string_pretty(&doc).expect("JSON values serialise");
            buf.extend_from_slice(text.as_bytes());
            buf.push(b'\n');
        }
        _ => write_csv(&records, &mut buf).expect("writing to memory"),
    }
    match &args.out {
        Some(path) => fs::write(path, &buf).map_err(|e| CliError::io(path.display(), e))?,
        None => out
            .write_all(&buf)
            .map_err(|e| CliError::io("<stdout>", e))?,
    }

    let failed: Vec<(usize, String)> = rows
        .iter()
        .zip(&records)
        .filter_map(|(row, rec)| rec.error.clone().map(|m| (row.line, m)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Rows {
            total: rows.len(),
            rows: failed,
        })
    }
}

// tolerances of the property suite
const MAX_CHECK_CELLS: usize = 100;
const IDENTITY_TOL: f64 = 1e-5;
const ALGEBRAIC_TOL: f64 = 1e-12;
const MOLLIFIER_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];
const MOLLIFIER_EXACT_TOL: f64 = 1e-12;
const ROUND_TRIP_TOL: f64 = 1e-13;
const RHOS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
const DECAY_FACTOR: f64 = 2.0;
const PICARD_EPSILON: f64 = 1e-6;
const PICARD_GAP_TOL: f64 = 1e-4;

struct Property {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn property(name: &'static str, run: impl FnOnce() -> Result<(bool, String), String>) -> Property {
    match run() {
        Ok((pass, detail)) => Property { name, pass, detail },
        Err(detail) => Property {
            name,
            pass: false,
            detail,
        },
    }
}

pub fn check(args: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.n_h > MAX_CHECK_CELLS {
        return Err(CliError::InvalidArgument(format!(
            "--nh must be at most {MAX_CHECK_CELLS}, got {}",
            args.n_h
        )));
    }
    let mesh = mesh(args.n_h)?;
    let case = ManufacturedCase::new(args.alpha, args.beta)
        .map_err(|e| CliError::InvalidArgument(e.to_string()))?;
    let (alpha, beta, n) = (args.alpha, args.beta, args.n_h);
    let s = |e: &dyn std::fmt::Display| e.to_string();

    let props = [
        property("manufactured_identities", || {
            let r = verify_manufactured(&case, args.samples, args.seed).map_err(|e| s(&e))?;
            Ok((
                r.state_identity <= IDENTITY_TOL
                    && r.adjoint_identity <= IDENTITY_TOL
                    && r.algebraic <= ALGEBRAIC_TOL
                    && r.zero_region <= ALGEBRAIC_TOL,
                format!(
                    "state={:.2e} adjoint={:.2e} algebraic={:.2e} zero_region={:.2e}",
                    r.state_identity, r.adjoint_identity, r.algebraic, r.zero_region
                ),
            ))
        }),
        property("zero_set_fraction", || {
            let defect = zero_fraction_defect(&case, &mesh);
            let bound = 5.0 / (n + 1) as f64;
            Ok((
                defect <= bound,
                format!("|fraction - (1 - beta)| = {defect:.3e} <= {bound:.3e}"),
            ))
        }),
        property("mollifier", || {
            let mut pass = true;
            let mut parts = Vec::new();
            for eps in MOLLIFIER_EPSILONS {
                let d = mollifier_defects(eps, 2001).map_err(|e| s(&e))?;
                pass &= d.min_value >= 1.0 && d.gap_outside <= MOLLIFIER_EXACT_TOL && d.gap <= eps;
                parts.push(format!(
                    "eps={eps:.0e} min={:.6} outside={:.1e} gap={:.2e}",
                    d.min_value, d.gap_outside, d.gap
                ));
            }
            Ok((pass, parts.join("; ")))
        }),
        property("kirchhoff_round_trip", || {
            let e = kirchhoff_round_trip(10_000, 10.0, args.seed);
            Ok((e <= ROUND_TRIP_TOL, format!("max error {e:.2e}")))
        }),
        property("directional_derivative", || {
            let st = directional_derivative_study(n, alpha, beta, &RHOS).map_err(|e| s(&e))?;
            let pts: Vec<String> = st
                .points
                .iter()
                .map(|(r, d)| format!("{r:.0e}:{d:.2e}"))
                .collect();
            Ok((st.decays(2, DECAY_FACTOR), pts.join(" ")))
        }),
        property("picard_matches_kirchhoff", || {
            let u = NodalFunction::interpolate(&mesh, |a, b| case.u(a, b));
            let yk = solve_state_kirchhoff(&mesh, &u).map_err(|e| s(&e))?;
            let cfg = PicardConfig {
                tol: 1e-10,
                max_iter: 100,
                epsilon: PICARD_EPSILON,
            };
            let (yp, it) = solve_state_picard(&mesh, &u, &cfg).map_err(|e| s(&e))?;
            let gap = relative_h1_error(&mesh, &yp, &yk);
            Ok((
                gap <= PICARD_GAP_TOL,
                format!("relative gap {gap:.2e} after {it} iterations"),
            ))
        }),
    ];

    let io = |e| CliError::io("<stdout>", e);
    for p in &props {
        let tag = if p.pass { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {}: {}", p.name, p.detail).map_err(io)?;
    }
    let failed: Vec<String> = props
        .iter()
        .filter(|p| !p.pass)
        .map(|p| p.name.to_string())
        .collect();
    writeln!(
        out,
        "{} of {} properties passed (n_h={n}, alpha={alpha:e}, beta={beta})",
        props.len() - failed.len(),
        props.len()
    )
    .map_err(io)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed))
    }
}
