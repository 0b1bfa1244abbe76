//! The 2×2 block system of one semi-smooth Newton step:
//!
//! ```text
//! [ M_alpha   A   ] [δw]     [r1]
//! [   A     -M_d  ] [δψ] = − [r2]
//! ```
//!
//! solved as a single sparse symmetric system. With `M_alpha` and `M_d`
//! positive definite the matrix is quasi-definite and admits an LDLᵀ
//! factorisation under any symmetric ordering. A merely semidefinite `M_d`
//! may produce vanishing pivots; the factorisation is then regularised and
//! used as a preconditioner for GMRES.

use crate::scalar::{norm2, Real};

use super::ldl::LdlSymbolic;
use super::{gmres, CsrMatrix, GmresOptions, LinalgError};

#[derive(Debug, Clone)]
pub struct BlockSystem<T> {
    pub m_alpha: CsrMatrix<T>,
    pub a: CsrMatrix<T>,
    pub m_d: CsrMatrix<T>,
    pub r1: Vec<T>,
    pub r2: Vec<T>,
}

impl<T: Real> BlockSystem<T> {
    pub fn dim(&self) -> usize {
        self.a.n_rows()
    }

    fn check(&self) -> Result<(), LinalgError> {
        let n = self.dim();
        for got in [
            self.a.n_cols(),
            self.m_alpha.n_rows(),
            self.m_alpha.n_cols(),
            self.m_d.n_rows(),
            self.m_d.n_cols(),
            self.r1.len(),
            self.r2.len(),
        ] {
            if got != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: got,
                });
            }
        }
        Ok(())
    }

    /// The assembled `2n × 2n` operator.
    pub fn assemble(&self) -> Result<CsrMatrix<T>, LinalgError> {
        self.check()?;
        CsrMatrix::block2(&self.m_alpha, &self.a, &self.a, &self.m_d.scaled(-T::one()))
            .map(|k| k.with_symmetric_hint(true))
    }

    /// `−(r1, r2)` stacked.
    pub fn rhs(&self) -> Vec<T> {
        self.r1.iter().chain(&self.r2).map(|&v| -v).collect()
    }
}

const MAX_REFINE: usize = 8;

/// Block solver that keeps the symbolic analysis between calls with an
/// unchanged sparsity pattern.
#[derive(Debug, Default)]
pub struct BlockSolver {
    symbolic: Option<LdlSymbolic>,
}

impl BlockSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `(δw, δψ)` with full residual at most `tol·max(1, ‖(r1, r2)‖)`.
    pub fn solve<T: Real>(
        &mut self,
        sys: &BlockSystem<T>,
        tol: T,
    ) -> Result<(Vec<T>, Vec<T>), LinalgError> {
        let k = sys.assemble()?;
        let rhs = sys.rhs();
        let symbolic = match self.symbolic.take() {
            Some(s) if s.matches(&k) => s,
            _ => LdlSymbolic::analyse(&k)?,
        };
        self.symbolic = Some(symbolic.clone());
        let bound = tol * norm2(&rhs).max(T::one());
        let plain = symbolic.factor(&k);
        let first = match plain {
            Ok(f) => Some(f.solve_refined(&k, &rhs, tol, MAX_REFINE)?),
            Err(LinalgError::Singular { .. }) => None,
            Err(e) => return Err(e),
        };
        let x = match first {
            Some((x, rn)) if rn <= bound => x,
            first => {
                // Pivots of a quasi-definite matrix are positive in the first
                // block and negative in the second under any ordering. Enforce
                // that pattern and let GMRES absorb the perturbation.
                let n = sys.dim();
                let signs: Vec<i8> = (0..2 * n).map(|i| if i < n { 1 } else { -1 }).collect();
                let factor = symbolic.factor_signed(&k, &signs)?;
                let opts = GmresOptions {
                    tol: bound / norm2(&rhs).max(T::min_positive_value()),
                    restart: 100,
                    max_iter: 500,
                };
                let x0 = first.map(|(x, _)| x);
                gmres(
                    |v| k.matvec(v),
                    |v| factor.solve(v),
                    &rhs,
                    x0.as_deref(),
                    &opts,
                )?
                .x
            }
        };
        let n = sys.dim();
        let (dw, dpsi) = x.split_at(n);
        Ok((dw.to_vec(), dpsi.to_vec()))
    }
}

pub fn solve_block2<T: Real>(
    sys: &BlockSystem<T>,
    tol: T,
) -> Result<(Vec<T>, Vec<T>), LinalgError> {
    BlockSolver::new().solve(sys, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mass, stiffness, Coefficient};
    use crate::grid::StructuredMesh;
    use crate::linalg::solve_spd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(n: usize, d: f64, o: f64) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, o));
                t.push((i - 1, i, o));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    fn full_residual(sys: &BlockSystem<f64>, dw: &[f64], dpsi: &[f64]) -> f64 {
        let k = sys.assemble().unwrap();
        let x: Vec<f64> = dw.iter().chain(dpsi).copied().collect();
        let kx = k.matvec(&x).unwrap();
        norm2(
            &kx.iter()
                .zip(sys.rhs())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )
    }

    fn random_system(n: usize, seed: u64) -> BlockSystem<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let diag: Vec<_> = (0..n).map(|i| (i, i, rng.gen_range(0.0..2.0))).collect();
        BlockSystem {
            m_alpha: tridiag(n, 4.0, 1.0).scaled(1e3),
            a: tridiag(n, 2.0, -1.0),
            m_d: CsrMatrix::from_triplets(n, n, diag).unwrap(),
            r1: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            r2: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut sys = random_system(10, 1);
        sys.r1 = vec![0.0; 10];
        sys.r2 = vec![0.0; 10];
        let (dw, dpsi) = solve_block2(&sys, 1e-12).unwrap();
        assert!(dw.iter().chain(&dpsi).all(|&v| v == 0.0));
    }

    #[test]
    fn matches_hand_elimination_without_curvature() {
        let n = 12;
        let mut sys = random_system(n, 2);
        sys.m_d = CsrMatrix::zeros(n, n);
        // the solution is large compared with the data, so rounding sets a
        // residual floor well above machine precision
        let (dw, dpsi) = solve_block2(&sys, 1e-9).unwrap();
        // A δw = −r2, then A δψ = −r1 − M_α δw
        let neg_r2: Vec<f64> = sys.r2.iter().map(|v| -v).collect();
        let dw_ref = solve_spd(&sys.a, &neg_r2, 1e-14).unwrap();
        let mdw = sys.m_alpha.matvec(&dw_ref).unwrap();
        let rhs: Vec<f64> = sys.r1.iter().zip(&mdw).map(|(r, m)| -r - m).collect();
        let dpsi_ref = solve_spd(&sys.a, &rhs, 1e-14).unwrap();
        for (u, v) in dw.iter().zip(&dw_ref).chain(dpsi.iter().zip(&dpsi_ref)) {
            assert!((u - v).abs() <= 1e-7 * v.abs().max(1.0), "{u} vs {v}");
        }
    }

    #[test]
    fn random_system_residual() {
        let sys = random_system(20, 3);
        let (dw, dpsi) = solve_block2(&sys, 1e-12).unwrap();
        let bound = 1e-10 * norm2(&sys.rhs()).max(1.0);
        assert!(full_residual(&sys, &dw, &dpsi) <= bound);
    }

    #[test]
    fn solver_reuse_is_transparent() {
        let mut solver = BlockSolver::new();
        let first = random_system(15, 4);
        let mut second = first.clone();
        second.m_d = second.m_d.scaled(3.0);
        second.r1.reverse();
        let _ = solver.solve(&first, 1e-12).unwrap();
        let reused = solver.solve(&second, 1e-12).unwrap();
        let fresh = solve_block2(&second, 1e-12).unwrap();
        for (u, v) in reused
            .0
            .iter()
            .zip(&fresh.0)
            .chain(reused.1.iter().zip(&fresh.1))
        {
            assert!((u - v).abs() <= 1e-10 * v.abs().max(1.0));
        }
        // a different pattern triggers a fresh analysis
        let third = random_system(9, 5);
        assert!(solver.solve(&third, 1e-12).is_ok());
    }

    #[test]
    fn finite_element_blocks_across_alpha() {
        let mesh = StructuredMesh::<f64>::with_cells(16).unwrap();
        let keep = mesh.interior_indices();
        let a = stiffness(&mesh, Coefficient::Constant(1.0))
            .unwrap()
            .principal_submatrix(keep);
        let m = mass(&mesh, Coefficient::Constant(1.0))
            .unwrap()
            .principal_submatrix(keep);
        let n = a.n_rows();
        for alpha in [1e-2, 1e-4, 1e-6, 1e-8] {
            let sys = BlockSystem {
                m_alpha: m.scaled(1.0 / alpha),
                a: a.clone(),
                m_d: m.scaled(0.7),
                r1: (0..n).map(|i| (i as f64 * 0.3).sin() / alpha).collect(),
                r2: (0..n).map(|i| (i as f64 * 0.7).cos()).collect(),
            };
            let (dw, dpsi) = solve_block2(&sys, 1e-12).unwrap();
            let bound = 1e-12 * norm2(&sys.rhs()).max(1.0);
            assert!(full_residual(&sys, &dw, &dpsi) <= bound, "alpha {alpha}");
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let mut sys = random_system(5, 6);
        sys.r2.pop();
        assert!(matches!(
            solve_block2(&sys, 1e-12),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }
}
