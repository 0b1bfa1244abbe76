//! P1 finite elements on a [`StructuredMesh`]: nodal functions, operator
//! assembly, load vectors and discrete norms.
//!
//! Variable coefficients are sampled once per element at the centroid. Load
//! vectors use the three edge-midpoint rule, which is exact for quadratics.

use std::io::{self, Write};

use thiserror::Error;

use crate::grid::{MeshError, StructuredMesh};
use crate::linalg::{CsrMatrix, LinalgError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("diffusion coefficient {value:e} at element {element} is not positive")]
    NonPositiveCoefficient { element: usize, value: f64 },
    #[error("non-finite value at element {element}")]
    NonFinite { element: usize },
    #[error(
        "nodal function belongs to a mesh with {found} vertices per side, expected {expected}"
    )]
    MeshMismatch { expected: usize, found: usize },
}

/// Barycentric coordinates of the edge midpoints.
pub const MIDPOINT_RULE: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Values of some field at the three quadrature points of every element.
pub type QuadratureValues<T> = Vec<[T; 3]>;

/// Coefficients of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFunction<T> {
    values: Vec<T>,
    n_h: usize,
    dirichlet: bool,
}

impl<T: Real> NodalFunction<T> {
    pub fn zeros(mesh: &StructuredMesh<T>) -> Self {
        Self {
            values: vec![T::zero(); mesh.vertex_count()],
            n_h: mesh.n_h(),
            dirichlet: true,
        }
    }

    /// Wraps raw nodal values; not tagged as satisfying the boundary condition.
    pub fn from_values(mesh: &StructuredMesh<T>, values: Vec<T>) -> Result<Self, MeshError> {
        mesh.check_len(values.len())?;
        Ok(Self {
            values,
            n_h: mesh.n_h(),
            dirichlet: false,
        })
    }

    /// Nodal values with boundary entries forced to zero.
    pub fn dirichlet(mesh: &StructuredMesh<T>, mut values: Vec<T>) -> Result<Self, MeshError> {
        mesh.check_len(values.len())?;
        for (v, &b) in values.iter_mut().zip(mesh.boundary_mask()) {
            if b {
                *v = T::zero();
            }
        }
        Ok(Self {
            values,
            n_h: mesh.n_h(),
            dirichlet: true,
        })
    }

    /// Extends interior values by zero on the boundary.
    pub fn from_interior(mesh: &StructuredMesh<T>, interior: &[T]) -> Result<Self, MeshError> {
        if interior.len() != mesh.interior_count() {
            return Err(MeshError::LengthMismatch {
                expected: mesh.interior_count(),
                found: interior.len(),
            });
        }
        let mut values = vec![T::zero(); mesh.vertex_count()];
        for (&v, &x) in mesh.interior_indices().iter().zip(interior) {
            values[v] = x;
        }
        Ok(Self {
            values,
            n_h: mesh.n_h(),
            dirichlet: true,
        })
    }

    /// Nodal interpolant of `f(x1, x2)`.
    pub fn interpolate<F: Fn(T, T) -> T>(mesh: &StructuredMesh<T>, f: F) -> Self {
        let values = (0..mesh.vertex_count())
            .map(|v| {
                let (x, y) = mesh.coords(v);
                f(x, y)
            })
            .collect();
        Self {
            values,
            n_h: mesh.n_h(),
            dirichlet: false,
        }
    }

    pub fn constant(mesh: &StructuredMesh<T>, c: T) -> Self {
        Self::interpolate(mesh, |_, _| c)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn is_dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn check_mesh(&self, mesh: &StructuredMesh<T>) -> Result<(), FemError> {
        if self.n_h != mesh.n_h() {
            return Err(FemError::MeshMismatch {
                expected: mesh.n_h(),
                found: self.n_h,
            });
        }
        Ok(())
    }

    pub fn interior_values(&self, mesh: &StructuredMesh<T>) -> Vec<T> {
        mesh.interior_indices()
            .iter()
            .map(|&v| self.values[v])
            .collect()
    }

    /// Nodewise map; the boundary tag survives only if `f(0) == 0`.
    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Self {
        let keeps_zero = f(T::zero()) == T::zero();
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            n_h: self.n_h,
            dirichlet: self.dirichlet && keeps_zero,
        }
    }

    /// Nodewise combination of two functions on the same mesh.
    pub fn zip_map<F: Fn(T, T) -> T>(&self, other: &Self, f: F) -> Result<Self, FemError> {
        if self.n_h != other.n_h {
            return Err(FemError::MeshMismatch {
                expected: self.n_h,
                found: other.n_h,
            });
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            n_h: self.n_h,
            dirichlet: self.dirichlet && other.dirichlet && f(T::zero(), T::zero()) == T::zero(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FemError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| s * v)
    }

    /// Plain-text export: one `x1 x2 value` line per vertex.
    pub fn write_xyz<W: Write>(&self, mesh: &StructuredMesh<T>, mut out: W) -> io::Result<()> {
        for (v, value) in self.values.iter().enumerate() {
            let (x, y) = mesh.coords(v);
            writeln!(out, "{x} {y} {value:.12e}")?;
        }
        Ok(())
    }
}

/// Diffusion coefficient or mass weight.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a, T> {
    Constant(T),
    /// P1 function, sampled at element centroids.
    Nodal(&'a NodalFunction<T>),
    /// One value per element.
    PerElement(&'a [T]),
}

impl<'a, T: Real> Coefficient<'a, T> {
    fn at_element(&self, mesh: &StructuredMesh<T>, e: usize) -> T {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::Nodal(f) => centroid_value(mesh, e, f.values()),
            Coefficient::PerElement(v) => v[e],
        }
    }

    fn check(&self, mesh: &StructuredMesh<T>) -> Result<(), FemError> {
        match *self {
            Coefficient::Constant(_) => Ok(()),
            Coefficient::Nodal(f) => f.check_mesh(mesh),
            Coefficient::PerElement(v) => {
                if v.len() != mesh.elements().len() {
                    Err(MeshError::LengthMismatch {
                        expected: mesh.elements().len(),
                        found: v.len(),
                    }
                    .into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[inline]
pub fn centroid_value<T: Real>(mesh: &StructuredMesh<T>, e: usize, values: &[T]) -> T {
    let [a, b, c] = mesh.elements()[e];
    (values[a] + values[b] + values[c]) / T::lit(3.0)
}

/// Gradient of a P1 function on element `e`.
#[inline]
pub fn element_gradient<T: Real>(mesh: &StructuredMesh<T>, e: usize, values: &[T]) -> [T; 2] {
    let g = mesh.geometry(e);
    let t = mesh.elements()[e];
    let mut out = [T::zero(); 2];
    for k in 0..3 {
        out[0] += values[t[k]] * g.grads[k][0];
        out[1] += values[t[k]] * g.grads[k][1];
    }
    out
}

fn assemble<T: Real, F>(mesh: &StructuredMesh<T>, mut local: F) -> Result<CsrMatrix<T>, FemError>
where
    F: FnMut(usize) -> Result<[[T; 3]; 3], FemError>,
{
    let n = mesh.vertex_count();
    let mut trip = Vec::with_capacity(9 * mesh.elements().len());
    for (e, t) in mesh.elements().iter().enumerate() {
        let k = local(e)?;
        for a in 0..3 {
            for b in 0..3 {
                trip.push((t[a], t[b], k[a][b]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, trip)?.with_symmetric_hint(true))
}

/// Stiffness matrix of `−div(c ∇·)` on the full vertex set.
pub fn stiffness<T: Real>(
    mesh: &StructuredMesh<T>,
    coeff: Coefficient<'_, T>,
) -> Result<CsrMatrix<T>, FemError> {
    coeff.check(mesh)?;
    assemble(mesh, |e| {
        let c = coeff.at_element(mesh, e);
        if !c.is_finite() {
            return Err(FemError::NonFinite { element: e });
        }
        if c <= T::zero() {
            return Err(FemError::NonPositiveCoefficient {
                element: e,
                value: c.to_f64_lossy(),
            });
        }
        let g = mesh.geometry(e);
        let mut k = [[T::zero(); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] =
                    c * g.area * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
            }
        }
        Ok(k)
    })
}

/// Mass matrix with the weight sampled at element centroids. Signed weights
/// are allowed.
pub fn mass<T: Real>(
    mesh: &StructuredMesh<T>,
    weight: Coefficient<'_, T>,
) -> Result<CsrMatrix<T>, FemError> {
    weight.check(mesh)?;
    let twelfth = T::one() / T::lit(12.0);
    assemble(mesh, |e| {
        let w = weight.at_element(mesh, e);
        if !w.is_finite() {
            return Err(FemError::NonFinite { element: e });
        }
        let s = w * mesh.geometry(e).area * twelfth;
        let mut k = [[s; 3]; 3];
        for (a, row) in k.iter_mut().enumerate() {
            row[a] = s + s;
        }
        Ok(k)
    })
}

/// Mass matrix `∫ w φ_i φ_j` with `w` given at the midpoint quadrature points.
pub fn mass_quadrature<T: Real>(
    mesh: &StructuredMesh<T>,
    weights: &[[T; 3]],
) -> Result<CsrMatrix<T>, FemError> {
    if weights.len() != mesh.elements().len() {
        return Err(MeshError::LengthMismatch {
            expected: mesh.elements().len(),
            found: weights.len(),
        }
        .into());
    }
    let rule = midpoint_rule::<T>();
    let third = T::one() / T::lit(3.0);
    assemble(mesh, |e| {
        let s = mesh.geometry(e).area * third;
        let mut k = [[T::zero(); 3]; 3];
        for (q, bary) in rule.iter().enumerate() {
            let w = weights[e][q];
            if !w.is_finite() {
                return Err(FemError::NonFinite { element: e });
            }
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] += s * w * bary[a] * bary[b];
                }
            }
        }
        Ok(k)
    })
}

fn midpoint_rule<T: Real>() -> [[T; 3]; 3] {
    MIDPOINT_RULE.map(|p| p.map(T::lit))
}

/// Physical coordinates of the quadrature points of every element.
pub fn quadrature_points<T: Real>(mesh: &StructuredMesh<T>) -> Vec<[(T, T); 3]> {
    let rule = midpoint_rule::<T>();
    mesh.elements()
        .iter()
        .map(|t| {
            let p = t.map(|v| mesh.coords(v));
            rule.map(|b| {
                (
                    b[0] * p[0].0 + b[1] * p[1].0 + b[2] * p[2].0,
                    b[0] * p[0].1 + b[1] * p[1].1 + b[2] * p[2].1,
                )
            })
        })
        .collect()
}

/// Values of the P1 interpolant of nodal `values` at the quadrature points.
pub fn at_quadrature<T: Real>(mesh: &StructuredMesh<T>, values: &[T]) -> QuadratureValues<T> {
    let half = T::lit(0.5);
    mesh.elements()
        .iter()
        .map(|&[a, b, c]| {
            [
                half * (values[a] + values[b]),
                half * (values[b] + values[c]),
                half * (values[a] + values[c]),
            ]
        })
        .collect()
}

/// Load vector `∫ g φ_i` from values of `g` at the quadrature points.
pub fn load_from_quadrature<T: Real>(
    mesh: &StructuredMesh<T>,
    g: &[[T; 3]],
) -> Result<Vec<T>, FemError> {
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let mut b = vec![T::zero(); mesh.vertex_count()];
    for (e, &[a, bb, c]) in mesh.elements().iter().enumerate() {
        let q = g[e];
        if q.iter().any(|v| !v.is_finite()) {
            return Err(FemError::NonFinite { element: e });
        }
        let s = mesh.geometry(e).area * third * half;
        // basis k is 1/2 at the two midpoints on its edges and 0 at the third
        b[a] += s * (q[0] + q[2]);
        b[bb] += s * (q[0] + q[1]);
        b[c] += s * (q[1] + q[2]);
    }
    Ok(b)
}

/// Load vector `∫ f φ_i` for a pointwise evaluator.
pub fn load_vector<T: Real, F: Fn(T, T) -> T>(
    mesh: &StructuredMesh<T>,
    f: F,
) -> Result<Vec<T>, FemError> {
    let g: Vec<[T; 3]> = quadrature_points(mesh)
        .iter()
        .map(|pts| pts.map(|(x, y)| f(x, y)))
        .collect();
    load_from_quadrature(mesh, &g)
}

/// Restricts a full-vertex system to the interior vertices.
pub fn apply_dirichlet<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    mesh: &StructuredMesh<T>,
) -> Result<(CsrMatrix<T>, Vec<T>), FemError> {
    mesh.check_len(a.n_rows())?;
    mesh.check_len(b.len())?;
    let keep = mesh.interior_indices();
    Ok((
        a.principal_submatrix(keep),
        keep.iter().map(|&v| b[v]).collect(),
    ))
}

/// `|v|_{H¹} = sqrt(vᵀ K v)` with `K` the unit-coefficient stiffness.
pub fn h1_seminorm<T: Real>(mesh: &StructuredMesh<T>, v: &NodalFunction<T>) -> T {
    h1_seminorm_values(mesh, v.values())
}

pub fn h1_seminorm_values<T: Real>(mesh: &StructuredMesh<T>, v: &[T]) -> T {
    let mut acc = T::zero();
    for e in 0..mesh.elements().len() {
        let g = element_gradient(mesh, e, v);
        acc += mesh.geometry(e).area * (g[0] * g[0] + g[1] * g[1]);
    }
    acc.sqrt()
}

/// `sqrt(vᵀ M v)` with the consistent mass matrix.
pub fn l2_norm<T: Real>(mesh: &StructuredMesh<T>, v: &NodalFunction<T>) -> T {
    l2_norm_values(mesh, v.values())
}

pub fn l2_norm_values<T: Real>(mesh: &StructuredMesh<T>, v: &[T]) -> T {
    let twelfth = T::one() / T::lit(12.0);
    let mut acc = T::zero();
    for (e, &[a, b, c]) in mesh.elements().iter().enumerate() {
        let (x, y, z) = (v[a], v[b], v[c]);
        let s = x + y + z;
        acc += mesh.geometry(e).area * twelfth * (x * x + y * y + z * z + s * s);
    }
    acc.sqrt()
}

pub fn linf_norm<T: Real>(v: &NodalFunction<T>) -> T {
    v.values().iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// First-order coupling `C[i][j] = ∫ χ φ_j ∇y·∇φ_i` with `χ` a P1 function.
pub fn coupling_matrix<T: Real>(
    mesh: &StructuredMesh<T>,
    y: &NodalFunction<T>,
    chi: &NodalFunction<T>,
) -> Result<CsrMatrix<T>, FemError> {
    y.check_mesh(mesh)?;
    chi.check_mesh(mesh)?;
    let twelfth = T::one() / T::lit(12.0);
    let mut m = assemble(mesh, |e| {
        let geo = mesh.geometry(e);
        let t = mesh.elements()[e];
        let gy = element_gradient(mesh, e, y.values());
        let chis = t.map(|v| chi.values()[v]);
        let sum = chis[0] + chis[1] + chis[2];
        let mut k = [[T::zero(); 3]; 3];
        for i in 0..3 {
            let flux = gy[0] * geo.grads[i][0] + gy[1] * geo.grads[i][1];
            for j in 0..3 {
                k[i][j] = flux * geo.area * twelfth * (sum + chis[j]);
            }
        }
        Ok(k)
    })?;
    m = m.with_symmetric_hint(false);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;
    use crate::linalg::solve_spd;
    use std::f64::consts::PI;

    fn mesh(n: usize) -> StructuredMesh<f64> {
        build_mesh(n).unwrap()
    }

    #[test]
    fn unit_stiffness_interior_stencil() {
        for n in [5, 9, 17] {
            let m = mesh(n);
            let k = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
            let v = m.interior_indices()[m.interior_count() / 2];
            let row: Vec<(usize, f64)> = k.row(v).filter(|(_, x)| x.abs() > 1e-14).collect();
            assert_eq!(row.len(), 5);
            for (c, x) in row {
                if c == v {
                    assert!((x - 4.0).abs() < 1e-12);
                } else {
                    assert!((x + 1.0).abs() < 1e-12);
                    assert!(c == v + 1 || c + 1 == v || c == v + n || c + n == v);
                }
            }
        }
    }

    #[test]
    fn stiffness_linear_in_constant_coefficient() {
        let m = mesh(7);
        let k1 = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
        let k2 = stiffness(&m, Coefficient::Constant(2.0)).unwrap();
        assert!(k1.same_pattern(&k2));
        for (a, b) in k1.values().iter().zip(k2.values()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn stiffness_rejects_nonpositive() {
        let m = mesh(4);
        assert!(matches!(
            stiffness(&m, Coefficient::Constant(0.0)),
            Err(FemError::NonPositiveCoefficient { .. })
        ));
        let f = NodalFunction::constant(&m, -1.0);
        assert!(stiffness(&m, Coefficient::Nodal(&f)).is_err());
        assert!(matches!(
            stiffness(&m, Coefficient::Constant(f64::NAN)),
            Err(FemError::NonFinite { .. })
        ));
    }

    #[test]
    fn mass_properties() {
        let m = mesh(11);
        let ms = mass(&m, Coefficient::Constant(1.0)).unwrap();
        let total: f64 = ms.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let h = m.h();
        let v = m.interior_indices()[7];
        let rs: f64 = ms.row(v).map(|(_, x)| x).sum();
        assert!((rs - h * h).abs() < 1e-15);
        let z = mass(&m, Coefficient::Constant(0.0)).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
        assert!(ms.is_symmetric(1e-14));
        // quadrature-weighted version agrees for a constant weight
        let mq = mass_quadrature(&m, &vec![[1.0; 3]; m.elements().len()]).unwrap();
        for (a, b) in ms.values().iter().zip(mq.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn load_vector_basics() {
        let m = mesh(9);
        let b = load_vector(&m, |_, _| 1.0).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let z = load_vector(&m, |_, _| 0.0).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        assert!(matches!(
            load_vector(&m, |x, _| if x > 0.5 { f64::NAN } else { 1.0 }),
            Err(FemError::NonFinite { .. })
        ));
    }

    #[test]
    fn load_vector_exact_for_quadratics() {
        // ∫ x² φ_i summed over i is ∫ x² = 1/3
        let m = mesh(6);
        let b = load_vector(&m, |x, _| x * x).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0 / 3.0).abs() < 1e-14);
        // ∫ x y φ_i weighted by nodal x gives ∫ x² y = 1/6
        let xs = NodalFunction::interpolate(&m, |x, _| x);
        let bx = load_vector(&m, |_, y| y).unwrap();
        let s: f64 = bx.iter().zip(xs.values()).map(|(a, b)| a * b).sum();
        assert!((s - 0.25).abs() < 1e-14);
    }

    fn poisson_error(n: usize) -> f64 {
        let m = mesh(n);
        let k = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
        let b = load_vector(&m, |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()).unwrap();
        let (a, bi) = apply_dirichlet(&k, &b, &m).unwrap();
        let x = solve_spd(&a, &bi, 1e-12).unwrap();
        let u = NodalFunction::from_interior(&m, &x).unwrap();
        (0..m.vertex_count())
            .map(|v| {
                let (x, y) = m.coords(v);
                (u.values()[v] - (PI * x).sin() * (PI * y).sin()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn poisson_oracle_and_rate() {
        let e50 = poisson_error(50);
        assert!(e50 <= 5e-3, "max nodal error {e50}");
        let coarse = poisson_error(17);
        let fine = poisson_error(33);
        let rate = (coarse / fine).log2();
        assert!(rate >= 1.8, "observed rate {rate}");
    }

    #[test]
    fn galerkin_orthogonality() {
        let m = mesh(15);
        let k = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
        let b = load_vector(&m, |x, y| x * (1.0 - y) + 1.0).unwrap();
        let (a, bi) = apply_dirichlet(&k, &b, &m).unwrap();
        let tol = 1e-12;
        let x = solve_spd(&a, &bi, tol).unwrap();
        let r = a.matvec(&x).unwrap();
        for (ri, bi) in r.iter().zip(&bi) {
            assert!((ri - bi).abs() <= tol);
        }
    }

    #[test]
    fn dirichlet_restriction() {
        let m = mesh(3);
        let k = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
        let (a, b) = apply_dirichlet(&k, &vec![1.0; 9], &m).unwrap();
        assert_eq!(a.n_rows(), 1);
        assert_eq!(b, vec![1.0]);
        let m = mesh(8);
        let k = stiffness(&m, Coefficient::Constant(1.5)).unwrap();
        let (a, _) = apply_dirichlet(&k, &vec![0.0; 64], &m).unwrap();
        assert!(a.symmetry_defect() <= 1e-14);
        let full = NodalFunction::from_interior(&m, &vec![1.0; a.n_rows()]).unwrap();
        for v in 0..m.vertex_count() {
            if m.is_boundary(v) {
                assert_eq!(full.values()[v], 0.0);
            }
        }
    }

    #[test]
    fn norms() {
        let m = mesh(65);
        let z = NodalFunction::zeros(&m);
        assert_eq!(h1_seminorm(&m, &z), 0.0);
        assert_eq!(l2_norm(&m, &z), 0.0);
        assert_eq!(linf_norm(&z), 0.0);
        let s = NodalFunction::interpolate(&m, |x, y| (PI * x).sin() * (PI * y).sin());
        let h1 = h1_seminorm(&m, &s);
        assert!((h1 - PI / 2f64.sqrt()).abs() < 1e-3, "{h1}");
        let x = NodalFunction::interpolate(&m, |x, _| x);
        let l2 = l2_norm(&m, &x);
        assert!((l2 - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        // agrees with the assembled quadratic forms
        let k = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
        let ks = k.matvec(s.values()).unwrap();
        let q: f64 = ks.iter().zip(s.values()).map(|(a, b)| a * b).sum();
        assert!((q.sqrt() - h1).abs() < 1e-12);
    }

    #[test]
    fn variable_coefficient_bounded_below_by_unit() {
        // Rayleigh quotients of stiffness(1 + |y|) dominate those of stiffness(1)
        let m = mesh(20);
        let y = NodalFunction::interpolate(&m, |x, y| (3.0 * x).sin() * (PI * y).sin());
        let a = y.map(|v| 1.0 + v.abs());
        let k = stiffness(&m, Coefficient::Nodal(&a)).unwrap();
        let k1 = stiffness(&m, Coefficient::Constant(1.0)).unwrap();
        let (ki, _) = apply_dirichlet(&k, &vec![0.0; m.vertex_count()], &m).unwrap();
        let (k1i, _) = apply_dirichlet(&k1, &vec![0.0; m.vertex_count()], &m).unwrap();
        assert!(ki.is_symmetric(1e-14));
        for seed in 0..20 {
            let v: Vec<f64> = (0..ki.n_rows())
                .map(|i| ((i * 7 + seed * 13) as f64 * 0.37).sin())
                .collect();
            let q = |a: &CsrMatrix<f64>| -> f64 {
                a.matvec(&v)
                    .unwrap()
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            assert!(q(&ki) >= q(&k1i));
        }
        assert!(solve_spd(&ki, &vec![1.0; ki.n_rows()], 1e-12).is_ok());
    }

    #[test]
    fn coupling_vanishes_for_flat_state() {
        let m = mesh(6);
        let y = NodalFunction::zeros(&m);
        let chi = NodalFunction::constant(&m, 1.0);
        let c = coupling_matrix(&m, &y, &chi).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupling_matches_direct_integration() {
        // y = x1 on the mesh, chi = 1: C[i][j] = ∫ φ_j ∂₁φ_i
        let m = mesh(5);
        let y = NodalFunction::interpolate(&m, |x, _| x);
        let chi = NodalFunction::constant(&m, 1.0);
        let c = coupling_matrix(&m, &y, &chi).unwrap();
        // row sums: ∫ ∂₁φ_i, which vanishes for interior vertices
        for &v in m.interior_indices() {
            let s: f64 = c.row(v).map(|(_, x)| x).sum();
            assert!(s.abs() < 1e-14);
        }
        // column sums: ∫ φ_j ∂₁(Σφ_i) = 0
        let ones = vec![1.0; m.vertex_count()];
        let ct = c.matvec_transpose(&ones).unwrap();
        assert!(ct.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn export_lines() {
        let m = mesh(3);
        let f = NodalFunction::interpolate(&m, |x, y| x + y);
        let mut buf = Vec::new();
        f.write_xyz(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.lines().last().unwrap().starts_with("1 1 2.0"));
    }

    #[test]
    fn single_precision_poisson() {
        let m: StructuredMesh<f32> = build_mesh(17).unwrap();
        let k = stiffness(&m, Coefficient::Constant(1.0f32)).unwrap();
        let b = load_vector(&m, |x, y| {
            2.0 * std::f32::consts::PI.powi(2)
                * (std::f32::consts::PI * x).sin()
                * (std::f32::consts::PI * y).sin()
        })
        .unwrap();
        let (a, bi) = apply_dirichlet(&k, &b, &m).unwrap();
        let x = solve_spd(&a, &bi, 1e-5).unwrap();
        let u = NodalFunction::from_interior(&m, &x).unwrap();
        let centre = u.values()[8 * 17 + 8];
        assert!((centre - 1.0).abs() < 1e-2);
    }
}
