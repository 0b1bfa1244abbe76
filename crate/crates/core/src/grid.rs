//! Uniform Friedrichs–Keller triangulation of the unit square.
//!
//! Vertices are numbered row-major: vertex `j * n_h + i` sits at `(i h, j h)`.
//! Every grid cell is split along the diagonal running from its lower-left
//! to its upper-right corner, giving the triangles `(a, b, c)` and `(a, c, d)`
//! with `a` lower-left, `b` lower-right, `c` upper-right and `d` upper-left.

use std::io::{self, Write};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeshError {
    #[error("mesh needs at least 3 vertices per side, got {0}")]
    TooCoarse(usize),
    #[error("vertex index {index} out of range for {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("field has {found} values but the mesh has {expected} vertices")]
    LengthMismatch { expected: usize, found: usize },
}

/// Area and constant basis gradients of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry<T> {
    pub area: T,
    /// `grads[k]` is the gradient of the hat function of local vertex `k`.
    pub grads: [[T; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct StructuredMesh<T> {
    n_h: usize,
    h: T,
    elements: Vec<[usize; 3]>,
    boundary_mask: Vec<bool>,
    interior: Vec<usize>,
    interior_pos: Vec<Option<usize>>,
    geometry: [ElementGeometry<T>; 2],
}

/// Builds the mesh with `n_h` vertices per side.
pub fn build_mesh<T: Real>(n_h: usize) -> Result<StructuredMesh<T>, MeshError> {
    StructuredMesh::new(n_h)
}

impl<T: Real> StructuredMesh<T> {
    pub fn new(n_h: usize) -> Result<Self, MeshError> {
        if n_h < 3 {
            return Err(MeshError::TooCoarse(n_h));
        }
        let h = T::one() / T::from_count(n_h - 1);
        let cells = n_h - 1;
        let mut elements = Vec::with_capacity(2 * cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                let a = j * n_h + i;
                let b = a + 1;
                let c = a + n_h + 1;
                let d = a + n_h;
                elements.push([a, b, c]);
                elements.push([a, c, d]);
            }
        }
        let count = n_h * n_h;
        let mut boundary_mask = vec![false; count];
        let mut interior = Vec::with_capacity((n_h - 2) * (n_h - 2));
        let mut interior_pos = vec![None; count];
        for v in 0..count {
            let (i, j) = (v % n_h, v / n_h);
            if i == 0 || j == 0 || i == n_h - 1 || j == n_h - 1 {
                boundary_mask[v] = true;
            } else {
                interior_pos[v] = Some(interior.len());
                interior.push(v);
            }
        }
        let lower = triangle_geometry([[T::zero(), T::zero()], [h, T::zero()], [h, h]]);
        let upper = triangle_geometry([[T::zero(), T::zero()], [h, h], [T::zero(), h]]);
        Ok(Self {
            n_h,
            h,
            elements,
            boundary_mask,
            interior,
            interior_pos,
            geometry: [lower, upper],
        })
    }

    /// Mesh with `cells` grid cells per side, i.e. `cells + 1` vertices per side.
    pub fn with_cells(cells: usize) -> Result<Self, MeshError> {
        Self::new(cells + 1)
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn vertex_count(&self) -> usize {
        self.n_h * self.n_h
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_mask[v]
    }

    /// Interior vertices in ascending order.
    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// Position of vertex `v` within [`Self::interior_indices`].
    pub fn interior_position(&self, v: usize) -> Option<usize> {
        self.interior_pos[v]
    }

    pub fn node_coordinates(&self, v: usize) -> Result<(T, T), MeshError> {
        if v >= self.vertex_count() {
            return Err(MeshError::VertexOutOfRange {
                index: v,
                count: self.vertex_count(),
            });
        }
        Ok(self.coords(v))
    }

    /// Unchecked variant of [`Self::node_coordinates`].
    #[inline]
    pub fn coords(&self, v: usize) -> (T, T) {
        let (i, j) = (v % self.n_h, v / self.n_h);
        (T::from_count(i) * self.h, T::from_count(j) * self.h)
    }

    /// Geometry of element `e`; even elements are the lower triangles of their cell.
    #[inline]
    pub fn geometry(&self, e: usize) -> &ElementGeometry<T> {
        &self.geometry[e % 2]
    }

    pub fn centroid(&self, e: usize) -> (T, T) {
        let third = T::one() / T::lit(3.0);
        let mut c = (T::zero(), T::zero());
        for &v in &self.elements[e] {
            let (x, y) = self.coords(v);
            c.0 += x;
            c.1 += y;
        }
        (c.0 * third, c.1 * third)
    }

    /// Signed area computed from the vertex coordinates.
    pub fn signed_area(&self, e: usize) -> T {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.coords(a), self.coords(b), self.coords(c));
        ((pb.0 - pa.0) * (pc.1 - pa.1) - (pc.0 - pa.0) * (pb.1 - pa.1)) / T::lit(2.0)
    }

    pub fn check_len(&self, len: usize) -> Result<(), MeshError> {
        if len != self.vertex_count() {
            return Err(MeshError::LengthMismatch {
                expected: self.vertex_count(),
                found: len,
            });
        }
        Ok(())
    }

    /// Plain-text dump: `vertex x1 x2` records followed by `element i j k` records.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in 0..self.vertex_count() {
            let (x, y) = self.coords(v);
            writeln!(out, "vertex {} {}", x, y)?;
        }
        for [a, b, c] in &self.elements {
            writeln!(out, "element {a} {b} {c}")?;
        }
        Ok(())
    }
}

fn triangle_geometry<T: Real>(p: [[T; 2]; 3]) -> ElementGeometry<T> {
    let two = T::lit(2.0);
    let (e1, e2) = (
        [p[1][0] - p[0][0], p[1][1] - p[0][1]],
        [p[2][0] - p[0][0], p[2][1] - p[0][1]],
    );
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    // rows of the inverse transposed Jacobian applied to reference gradients
    let g1 = [e2[1] / det, -e2[0] / det];
    let g2 = [-e1[1] / det, e1[0] / det];
    let g0 = [-(g1[0] + g2[0]), -(g1[1] + g2[1])];
    ElementGeometry {
        area: det / two,
        grads: [g0, g1, g2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn smallest_mesh_counts() {
        let m: StructuredMesh<f64> = build_mesh(3).unwrap();
        assert_eq!(m.vertex_count(), 9);
        assert_eq!(m.elements().len(), 8);
        assert_eq!(m.boundary_mask().iter().filter(|&&b| b).count(), 8);
        assert_eq!(m.interior_indices(), &[4]);
    }

    #[test]
    fn table_resolution_counts() {
        let m: StructuredMesh<f64> = build_mesh(100).unwrap();
        assert_eq!(m.vertex_count(), 10_000);
        assert_eq!(m.elements().len(), 19_602);
        assert_eq!(m.interior_count(), 9604);
    }

    #[test]
    fn rejects_degenerate() {
        assert_eq!(build_mesh::<f64>(2).unwrap_err(), MeshError::TooCoarse(2));
        assert!(build_mesh::<f64>(0).is_err());
    }

    #[test]
    fn coordinates() {
        let m: StructuredMesh<f64> = build_mesh(3).unwrap();
        assert_eq!(m.node_coordinates(0).unwrap(), (0.0, 0.0));
        assert_eq!(m.node_coordinates(4).unwrap(), (0.5, 0.5));
        assert_eq!(m.node_coordinates(8).unwrap(), (1.0, 1.0));
        assert!(matches!(
            m.node_coordinates(9),
            Err(MeshError::VertexOutOfRange { index: 9, count: 9 })
        ));
    }

    #[test]
    fn interior_vertex_incidence() {
        let m: StructuredMesh<f64> = build_mesh(4).unwrap();
        // (1/3, 1/3) is vertex 5
        let v = 5;
        let (x, y) = m.coords(v);
        assert!((x - 1.0 / 3.0).abs() < 1e-15 && (y - 1.0 / 3.0).abs() < 1e-15);
        let count = m.elements().iter().filter(|e| e.contains(&v)).count();
        assert_eq!(count, 6);
        assert_eq!(m.interior_indices().len(), 4);
        for &v in m.interior_indices() {
            assert_eq!(m.elements().iter().filter(|e| e.contains(&v)).count(), 6);
        }
    }

    #[test]
    fn areas_orientation_and_edges() {
        for n in [3usize, 4, 7, 20] {
            let m: StructuredMesh<f64> = build_mesh(n).unwrap();
            let h = m.h();
            let mut total = 0.0;
            let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
            for e in 0..m.elements().len() {
                let a = m.signed_area(e);
                assert!((a - h * h / 2.0).abs() < 1e-15);
                assert!((m.geometry(e).area - a).abs() < 1e-15);
                total += a;
                let t = m.elements()[e];
                for k in 0..3 {
                    let (p, q) = (t[k], t[(k + 1) % 3]);
                    *edges.entry((p.min(q), p.max(q))).or_default() += 1;
                }
            }
            assert!((total - 1.0).abs() < 1e-12);
            for ((p, q), count) in edges {
                let on_boundary = m.is_boundary(p) && m.is_boundary(q) && {
                    let (a, b) = (m.coords(p), m.coords(q));
                    (a.0 == b.0 && (a.0 == 0.0 || a.0 == 1.0))
                        || (a.1 == b.1 && (a.1 == 0.0 || a.1 == 1.0))
                };
                assert_eq!(count, if on_boundary { 1 } else { 2 });
            }
        }
    }

    #[test]
    fn boundary_mask_matches_coordinates() {
        let m: StructuredMesh<f64> = build_mesh(9).unwrap();
        for v in 0..m.vertex_count() {
            let (x, y) = m.coords(v);
            let on = [x, y]
                .iter()
                .any(|c| c.abs() < 1e-14 || (c - 1.0).abs() < 1e-14);
            assert_eq!(on, m.is_boundary(v));
        }
    }

    #[test]
    fn gradients_reproduce_linear_functions() {
        let m: StructuredMesh<f64> = build_mesh(5).unwrap();
        for e in 0..m.elements().len() {
            let g = m.geometry(e);
            let t = m.elements()[e];
            // interpolate f = 2x - 3y on the element
            let mut grad = [0.0; 2];
            for k in 0..3 {
                let (x, y) = m.coords(t[k]);
                let f = 2.0 * x - 3.0 * y;
                grad[0] += f * g.grads[k][0];
                grad[1] += f * g.grads[k][1];
            }
            assert!((grad[0] - 2.0).abs() < 1e-12 && (grad[1] + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_runs_lower_left_to_upper_right() {
        let m: StructuredMesh<f64> = build_mesh(6).unwrap();
        for (e, t) in m.elements().iter().enumerate() {
            let cell_ll = t[0];
            let cell_ur = cell_ll + m.n_h() + 1;
            assert!(t.contains(&cell_ur), "element {e} lacks the diagonal");
        }
    }

    #[test]
    fn dump_format() {
        let m: StructuredMesh<f64> = build_mesh(3).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], "vertex 0 0");
        assert_eq!(lines[9], "element 0 1 4");
    }

    #[test]
    fn single_precision_mesh() {
        let m: StructuredMesh<f32> = build_mesh(11).unwrap();
        let total: f32 = (0..m.elements().len()).map(|e| m.signed_area(e)).sum();
        assert!((total - 1.0).abs() < 1e-5);
    }
}
