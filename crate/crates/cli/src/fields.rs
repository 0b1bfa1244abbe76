//! Named or user-defined nodal fields, dumps, and twelve-digit JSON output.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use qct_core::bench::fmt_num;
use qct_core::manufactured::ManufacturedCase;
use qct_core::{Mesh, NodalFunction};
use serde_json::{json, Value};

use crate::args::Format;
use crate::error::CliError;
use crate::expr::Expr;

/// Source of a nodal field given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Zero,
    Manufactured,
    Expr(String, Expr),
}

impl FieldSpec {
    pub fn parse(text: &str, flag: &'static str) -> Result<Self, CliError> {
        match text.trim() {
            "zero" => Ok(FieldSpec::Zero),
            "manufactured" => Ok(FieldSpec::Manufactured),
            src => Expr::parse(src)
                .map(|e| FieldSpec::Expr(src.to_string(), e))
                .map_err(|source| CliError::Expression { flag, source }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FieldSpec::Zero => "zero".into(),
            FieldSpec::Manufactured => "manufactured".into(),
            FieldSpec::Expr(src, _) => src.clone(),
        }
    }

    /// Nodal interpolant; `manufactured` takes `pick` of the case.
    pub fn interpolate(
        &self,
        mesh: &Mesh,
        case: Option<&ManufacturedCase>,
        pick: fn(&ManufacturedCase, f64, f64) -> f64,
        flag: &str,
    ) -> Result<NodalFunction, CliError> {
        let f = match self {
            FieldSpec::Zero => NodalFunction::zeros(mesh),
            FieldSpec::Manufactured => {
                let case = case.expect("manufactured field needs a case");
                NodalFunction::interpolate(mesh, |x, y| pick(case, x, y))
            }
            FieldSpec::Expr(_, e) => NodalFunction::interpolate(mesh, |x, y| e.eval(x, y)),
        };
        if let Some(v) = f.values().iter().position(|v| !v.is_finite()) {
            let (x, y) = mesh.coords(v);
            return Err(CliError::InvalidArgument(format!(
                "--{flag} is not finite at ({x}, {y})"
            )));
        }
        Ok(f)
    }
}

/// Rounds to twelve significant digits; non-finite values become `null`.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(fmt_num(v).parse::<f64>().expect("formatted float parses"))
    } else {
        Value::Null
    }
}

/// Applies [`num`] to every floating-point number inside `v`.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => *v = num(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn write_field<W: Write>(
    mesh: &Mesh,
    f: &NodalFunction,
    format: Format,
    mut out: W,
) -> io::Result<()> {
    let coords = (0..mesh.vertex_count()).map(|v| mesh.coords(v));
    match format {
        Format::Xyz => {
            for ((x, y), v) in coords.zip(f.values()) {
                writeln!(out, "{} {} {}", fmt_num(x), fmt_num(y), fmt_num(*v))?;
            }
        }
        Format::Csv => {
            writeln!(out, "x1,x2,value")?;
            for ((x, y), v) in coords.zip(f.values()) {
                writeln!(out, "{},{},{}", fmt_num(x), fmt_num(y), fmt_num(*v))?;
            }
        }
        Format::Json => {
            let (x1, x2): (Vec<Value>, Vec<Value>) = coords.map(|(x, y)| (num(x), num(y))).unzip();
            let value: Vec<Value> = f.values().iter().map(|&v| num(v)).collect();
            let doc = json!({ "n_h": mesh.n_h() - 1, "x1": x1, "x2": x2, "value": value });
            serde_json::to_writer(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    out.flush()
}

/// Writes `name.<ext>` into `dir` and returns the path written.
pub fn dump_field(
    dir: &Path,
    name: &str,
    mesh: &Mesh,
    f: &NodalFunction,
    format: Format,
) -> Result<String, CliError> {
    let path = dir.join(format!("{name}.{}", format.extension()));
    let file = fs::File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
    write_field(mesh, f, format, io::BufWriter::new(file))
        .map_err(|e| CliError::io(path.display(), e))?;
    Ok(path.display().to_string())
}

pub fn write_json_file(path: &Path, doc: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialise");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(1.0 / 3.0), json!(0.333333333333));
        assert_eq!(num(2.0 / 3.0 * 1e-7), json!(6.66666666667e-8));
        assert_eq!(num(f64::NAN), Value::Null);
        let mut v = json!({ "a": [0.1 + 0.2, 3], "b": { "c": 2.0 / 7.0 } });
        round_floats(&mut v);
        assert_eq!(v, json!({ "a": [0.3, 3], "b": { "c": 0.285714285714 } }));
    }

    #[test]
    fn field_specs() {
        assert_eq!(FieldSpec::parse("zero", "u").unwrap(), FieldSpec::Zero);
        assert_eq!(
            FieldSpec::parse(" manufactured ", "u").unwrap(),
            FieldSpec::Manufactured
        );
        assert!(matches!(
            FieldSpec::parse("x1*x2", "u").unwrap(),
            FieldSpec::Expr(..)
        ));
        let err = FieldSpec::parse("manufacturd", "u").unwrap_err();
        assert_eq!(err.code(), "expression_error");
    }

    #[test]
    fn dumps_in_every_format() {
        let mesh = Mesh::with_cells(2).unwrap();
        let f = NodalFunction::interpolate(&mesh, |x, y| x + 2.0 * y);
        let mut xyz = Vec::new();
        write_field(&mesh, &f, Format::Xyz, &mut xyz).unwrap();
        let xyz = String::from_utf8(xyz).unwrap();
        assert_eq!(xyz.lines().count(), 9);
        for line in xyz.lines() {
            let v: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
            assert!((v[0] + 2.0 * v[1] - v[2]).abs() < 1e-12);
        }
        let mut csv = Vec::new();
        write_field(&mesh, &f, Format::Csv, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("x1,x2,value\n"));
        let mut js = Vec::new();
        write_field(&mesh, &f, Format::Json, &mut js).unwrap();
        let doc: Value = serde_json::from_slice(&js).unwrap();
        assert_eq!(doc["n_h"], 2);
        assert_eq!(doc["value"].as_array().unwrap().len(), 9);
    }

    #[test]
    fn non_finite_expression_rejected() {
        let mesh = Mesh::with_cells(2).unwrap();
        let spec = FieldSpec::parse("1/x1", "u").unwrap();
        let err = spec
            .interpolate(&mesh, None, ManufacturedCase::u, "u")
            .unwrap_err();
        assert_eq!(err.code(), "invalid_argument");
    }
}
