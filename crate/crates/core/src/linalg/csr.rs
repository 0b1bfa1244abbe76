use crate::scalar::Real;

use super::LinalgError;

/// Compressed sparse row matrix.
///
/// Column indices are strictly ascending within each row and duplicates are
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
    symmetric_hint: bool,
}

impl<T: Real> CsrMatrix<T> {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, entries: I) -> Result<Self, LinalgError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let entries: Vec<(usize, usize, T)> = entries.into_iter().collect();
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(LinalgError::IndexOutOfRange {
                    row: r,
                    col: c,
                    rows: n_rows,
                    cols: n_cols,
                });
            }
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        // bucket by row
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![T::zero(); entries.len()];
        for &(r, c, v) in &entries {
            let slot = next[r];
            cols[slot] = c;
            vals[slot] = v;
            next[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for r in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < scratch.len() {
                let c = scratch[k].0;
                let mut acc = T::zero();
                while k < scratch.len() && scratch[k].0 == c {
                    acc += scratch[k].1;
                    k += 1;
                }
                col_indices.push(c);
                values.push(acc);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric_hint: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
            symmetric_hint: true,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
            symmetric_hint: n_rows == n_cols,
        }
    }

    pub fn with_symmetric_hint(mut self, hint: bool) -> Self {
        self.symmetric_hint = hint;
        self
    }

    pub fn symmetric_hint(&self) -> bool {
        self.symmetric_hint
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_rows,
                found: y.len(),
            });
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yr = acc;
        }
        Ok(())
    }

    /// `y = Aᵀ x`
    pub fn matvec_transpose(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.n_rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_rows,
                found: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                y[self.col_indices[k]] += self.values[k] * xr;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.n_rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                col_indices[next[c]] = r;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
            symmetric_hint: self.symmetric_hint,
        }
    }

    /// Largest `|A(i,j) - A(j,i)|` relative to the largest stored magnitude.
    pub fn symmetry_defect(&self) -> T {
        if self.n_rows != self.n_cols {
            return T::infinity();
        }
        let scale = self
            .values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
            .max(T::min_positive_value());
        let mut worst = T::zero();
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst / scale
    }

    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        self.symmetry_defect() <= rel_tol
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s * other`; patterns may differ.
    pub fn add_scaled(&self, s: T, other: &Self) -> Result<Self, LinalgError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_rows,
                found: other.n_rows,
            });
        }
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.n_rows {
            trip.extend(self.row(r).map(|(c, v)| (r, c, v)));
            trip.extend(other.row(r).map(|(c, v)| (r, c, s * v)));
        }
        Ok(Self::from_triplets(self.n_rows, self.n_cols, trip)?
            .with_symmetric_hint(self.symmetric_hint && other.symmetric_hint))
    }

    /// Restriction to the rows and columns listed in `keep` (ascending).
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n_cols.max(self.n_rows)];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let mut row_offsets = Vec::with_capacity(keep.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &r in keep {
            for (c, v) in self.row(r) {
                let pc = pos[c];
                if pc != usize::MAX {
                    col_indices.push(pc);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: keep.len(),
            n_cols: keep.len(),
            row_offsets,
            col_indices,
            values,
            symmetric_hint: self.symmetric_hint,
        }
    }

    /// Rows in `rows`, columns in `cols` (both ascending index lists).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n_cols];
        for (k, &i) in cols.iter().enumerate() {
            pos[i] = k;
        }
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &r in rows {
            for (c, v) in self.row(r) {
                if pos[c] != usize::MAX {
                    col_indices.push(pos[c]);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols: cols.len(),
            row_offsets,
            col_indices,
            values,
            symmetric_hint: false,
        }
    }

    /// Assembles `[[a11, a12], [a21, a22]]`.
    pub fn block2(a11: &Self, a12: &Self, a21: &Self, a22: &Self) -> Result<Self, LinalgError> {
        let (n1, n2) = (a11.n_rows, a21.n_rows);
        let (m1, m2) = (a11.n_cols, a12.n_cols);
        for (got, want) in [
            (a12.n_rows, n1),
            (a22.n_rows, n2),
            (a21.n_cols, m1),
            (a22.n_cols, m2),
        ] {
            if got != want {
                return Err(LinalgError::DimensionMismatch {
                    expected: want,
                    found: got,
                });
            }
        }
        let mut row_offsets = Vec::with_capacity(n1 + n2 + 1);
        let mut col_indices = Vec::with_capacity(a11.nnz() + a12.nnz() + a21.nnz() + a22.nnz());
        let mut values = Vec::with_capacity(col_indices.capacity());
        row_offsets.push(0);
        for (left, right, rows) in [(a11, a12, n1), (a21, a22, n2)] {
            for r in 0..rows {
                for (c, v) in left.row(r) {
                    col_indices.push(c);
                    values.push(v);
                }
                for (c, v) in right.row(r) {
                    col_indices.push(m1 + c);
                    values.push(v);
                }
                row_offsets.push(col_indices.len());
            }
        }
        Ok(Self {
            n_rows: n1 + n2,
            n_cols: m1 + m2,
            row_offsets,
            col_indices,
            values,
            symmetric_hint: false,
        })
    }

    /// Whether `other` has exactly the same sparsity pattern.
    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}
