//! Sparse symmetric factorisations without pivoting.
//!
//! The matrix is symmetrically equilibrated, reordered with AMD and handed to
//! a supernodal LLᵀ or LDLᵀ kernel. LDLᵀ covers symmetric positive definite
//! and symmetric quasi-definite matrices; any other symmetric matrix factors
//! as long as no pivot vanishes. Arithmetic is carried out in `f64`.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::{LdltError, LdltRegularization};
use faer::linalg::cholesky::llt::factor::LltError;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, LltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use crate::scalar::{norm2, Real};

use super::{CsrMatrix, LinalgError};

const NONE: usize = usize::MAX;

/// Pivot threshold and replacement value of the signed factorisation, relative
/// to the unit diagonal of the equilibrated matrix.
pub const REG_EPSILON: f64 = 1e-12;
pub const REG_DELTA: f64 = 1e-8;

#[derive(Debug)]
struct Analysis {
    n: usize,
    /// Upper triangle in compressed columns, original numbering.
    u_colptr: Vec<usize>,
    u_rowind: Vec<usize>,
    /// For each stored entry of the source CSR matrix, its slot in the upper
    /// triangle (or `NONE` when it lies strictly below the diagonal).
    slot: Vec<usize>,
    pattern_offsets: Vec<usize>,
    pattern_cols: Vec<usize>,
    cholesky: SymbolicCholesky<usize>,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
}

impl Analysis {
    fn upper<'a>(&'a self, vals: &'a [f64]) -> SparseColMatRef<'a, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.u_colptr,
            None,
            &self.u_rowind,
        );
        SparseColMatRef::new(sym, vals)
    }

    fn original_index(&self, k: usize) -> usize {
        self.perm.get(k).copied().unwrap_or(k)
    }

    /// Scaled upper-triangle values of `a` and the scaling used.
    fn scaled_values<T: Real>(
        &self,
        a: &CsrMatrix<T>,
    ) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
        let scale: Vec<f64> = a
            .diagonal()
            .iter()
            .map(|d| {
                let m = d.to_f64_lossy().abs();
                if m > 0.0 && m.is_finite() {
                    1.0 / m.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut ux = vec![0.0; self.u_rowind.len()];
        for r in 0..self.n {
            for k in a.row_offsets()[r]..a.row_offsets()[r + 1] {
                let s = self.slot[k];
                if s != NONE {
                    let c = a.col_indices()[k];
                    let v = a.values()[k].to_f64_lossy() * scale[r] * scale[c];
                    if !v.is_finite() {
                        return Err(LinalgError::Singular { pivot: r.min(c) });
                    }
                    ux[s] = v;
                }
            }
        }
        Ok((ux, scale))
    }
}

/// Ordering and supernodal structure of the factor, reusable across matrices
/// with the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    inner: Arc<Analysis>,
}

impl LdlSymbolic {
    /// Analyses the pattern of a structurally symmetric square matrix.
    pub fn analyse<T: Real>(a: &CsrMatrix<T>) -> Result<Self, LinalgError> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: a.n_cols(),
            });
        }
        let mut counts = vec![0usize; n + 1];
        for r in 0..n {
            for k in a.row_offsets()[r]..a.row_offsets()[r + 1] {
                let c = a.col_indices()[k];
                if r <= c {
                    counts[c + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let u_colptr = counts.clone();
        let mut next = counts;
        let mut u_rowind = vec![0usize; u_colptr[n]];
        let mut slot = vec![NONE; a.nnz()];
        // rows visited in increasing order keep each column sorted
        for r in 0..n {
            for k in a.row_offsets()[r]..a.row_offsets()[r + 1] {
                let c = a.col_indices()[k];
                if r <= c {
                    u_rowind[next[c]] = r;
                    slot[k] = next[c];
                    next[c] += 1;
                }
            }
        }
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &u_colptr, None, &u_rowind);
        let cholesky = factorize_symbolic_cholesky(
            pattern,
            Side::Upper,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| LinalgError::Ordering(format!("{e:?}")))?;
        let perm = cholesky
            .perm()
            .map(|p| p.arrays().0.to_vec())
            .unwrap_or_else(|| (0..n).collect());
        Ok(Self {
            inner: Arc::new(Analysis {
                n,
                u_colptr,
                u_rowind,
                slot,
                pattern_offsets: a.row_offsets().to_vec(),
                pattern_cols: a.col_indices().to_vec(),
                cholesky,
                perm,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.n
    }

    /// Number of stored values of the factor.
    pub fn factor_nnz(&self) -> usize {
        self.inner.cholesky.len_val()
    }

    pub fn matches<T: Real>(&self, a: &CsrMatrix<T>) -> bool {
        a.n_rows() == self.inner.n
            && a.row_offsets() == self.inner.pattern_offsets.as_slice()
            && a.col_indices() == self.inner.pattern_cols.as_slice()
    }

    fn check<T: Real>(&self, a: &CsrMatrix<T>) -> Result<(), LinalgError> {
        if self.matches(a) {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch {
                expected: self.inner.n,
                found: a.n_rows(),
            })
        }
    }

    /// Numeric LDLᵀ factorisation of `a`, which must share the analysed pattern.
    pub fn factor<T: Real>(&self, a: &CsrMatrix<T>) -> Result<LdlFactor<T>, LinalgError> {
        self.factor_impl(a, None)
    }

    /// LDLᵀ factorisation with the expected sign of every pivot (in original
    /// numbering). A pivot of the wrong sign or of magnitude below
    /// `REG_EPSILON` is replaced by `±REG_DELTA`, so the result factors a
    /// nearby matrix and should be used with iterative refinement.
    pub fn factor_signed<T: Real>(
        &self,
        a: &CsrMatrix<T>,
        signs: &[i8],
    ) -> Result<LdlFactor<T>, LinalgError> {
        if signs.len() != self.inner.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.inner.n,
                found: signs.len(),
            });
        }
        self.factor_impl(a, Some(signs))
    }

    fn factor_impl<T: Real>(
        &self,
        a: &CsrMatrix<T>,
        signs: Option<&[i8]>,
    ) -> Result<LdlFactor<T>, LinalgError> {
        self.check(a)?;
        let an = &*self.inner;
        let (ux, scale) = an.scaled_values(a)?;
        let mut values = vec![0.0; an.cholesky.len_val()];
        let mut buf = MemBuffer::new(
            an.cholesky
                .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()),
        );
        let regularization = match signs {
            Some(signs) => LdltRegularization {
                dynamic_regularization_signs: Some(signs),
                dynamic_regularization_delta: REG_DELTA,
                dynamic_regularization_epsilon: REG_EPSILON,
            },
            None => LdltRegularization::default(),
        };
        let res = an.cholesky.factorize_numeric_ldlt(
            &mut values,
            an.upper(&ux),
            Side::Upper,
            regularization,
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
        if let Err(LdltError::ZeroPivot { index }) = res {
            return Err(LinalgError::Singular {
                pivot: an.original_index(index),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::Singular { pivot: 0 });
        }
        Ok(LdlFactor {
            symbolic: self.clone(),
            scale,
            values,
            kind: Kind::Ldlt,
            _scalar: std::marker::PhantomData,
        })
    }

    /// Numeric Cholesky factorisation; fails unless `a` is numerically
    /// positive definite.
    pub fn factor_spd<T: Real>(&self, a: &CsrMatrix<T>) -> Result<LdlFactor<T>, LinalgError> {
        self.check(a)?;
        let an = &*self.inner;
        let (ux, scale) = an.scaled_values(a)?;
        let mut values = vec![0.0; an.cholesky.len_val()];
        let mut buf = MemBuffer::new(
            an.cholesky
                .factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()),
        );
        let res = an.cholesky.factorize_numeric_llt(
            &mut values,
            an.upper(&ux),
            Side::Upper,
            Default::default(),
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
        if let Err(LltError::NonPositivePivot { index }) = res {
            let pivot = an.original_index(index);
            return Err(LinalgError::NotPositiveDefinite {
                pivot,
                value: a.diagonal()[pivot].to_f64_lossy(),
            });
        }
        Ok(LdlFactor {
            symbolic: self.clone(),
            scale,
            values,
            kind: Kind::Llt,
            _scalar: std::marker::PhantomData,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Llt,
    Ldlt,
}

/// Numeric factor of `S A S` with `S` a diagonal equilibration.
#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    symbolic: LdlSymbolic,
    scale: Vec<f64>,
    values: Vec<f64>,
    kind: Kind,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real> LdlFactor<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self, LinalgError> {
        LdlSymbolic::analyse(a)?.factor(a)
    }

    /// Cholesky factor of a symmetric positive definite matrix.
    pub fn new_spd(a: &CsrMatrix<T>) -> Result<Self, LinalgError> {
        LdlSymbolic::analyse(a)?.factor_spd(a)
    }

    pub fn dim(&self) -> usize {
        self.symbolic.dim()
    }

    pub fn symbolic(&self) -> &LdlSymbolic {
        &self.symbolic
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = b
            .iter()
            .zip(&self.scale)
            .map(|(&bi, &s)| bi.to_f64_lossy() * s)
            .collect();
        let chol = &self.symbolic.inner.cholesky;
        let rhs = MatMut::from_column_major_slice_mut(&mut x, n, 1);
        match self.kind {
            Kind::Ldlt => {
                let f = LdltRef::new(chol, &self.values);
                let mut buf = MemBuffer::new(chol.solve_in_place_scratch::<f64>(1, Par::Seq));
                f.solve_in_place_with_conj(Conj::No, rhs, Par::Seq, MemStack::new(&mut buf));
            }
            Kind::Llt => {
                let f = LltRef::new(chol, &self.values);
                let mut buf = MemBuffer::new(chol.solve_in_place_scratch::<f64>(1, Par::Seq));
                f.solve_in_place_with_conj(Conj::No, rhs, Par::Seq, MemStack::new(&mut buf));
            }
        }
        Ok(x.iter()
            .zip(&self.scale)
            .map(|(&xi, &s)| T::lit(xi * s))
            .collect())
    }

    /// Solves with iterative refinement until `‖b − Ax‖ ≤ tol·‖b‖` or the
    /// correction stops helping. Returns the solution and its residual norm.
    pub fn solve_refined(
        &self,
        a: &CsrMatrix<T>,
        b: &[T],
        tol: T,
        max_refine: usize,
    ) -> Result<(Vec<T>, T), LinalgError> {
        let mut x = self.solve(b)?;
        let target = tol * norm2(b);
        let mut r = residual(a, &x, b)?;
        let mut rn = norm2(&r);
        for _ in 0..max_refine {
            if rn <= target {
                break;
            }
            let dx = self.solve(&r)?;
            let trial: Vec<T> = x.iter().zip(&dx).map(|(&xi, &di)| xi + di).collect();
            let r_trial = residual(a, &trial, b)?;
            let rn_trial = norm2(&r_trial);
            if !(rn_trial < rn) {
                break;
            }
            x = trial;
            r = r_trial;
            rn = rn_trial;
        }
        Ok((x, rn))
    }
}

pub(crate) fn residual<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> Result<Vec<T>, LinalgError> {
    let mut r = a.matvec(x)?;
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(r)
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// On success `‖Ax − b‖₂ ≤ tol·max(1, ‖b‖₂)`.
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, b: &[T], tol: T) -> Result<Vec<T>, LinalgError> {
    let factor = LdlFactor::new_spd(a)?;
    let (x, rn) = factor.solve_refined(a, b, tol, 3)?;
    let bound = tol * norm2(b).max(T::one());
    if rn > bound {
        return Err(LinalgError::NotConverged {
            iterations: 3,
            residual: rn.to_f64_lossy(),
            tol: bound.to_f64_lossy(),
        });
    }
    Ok(x)
}
