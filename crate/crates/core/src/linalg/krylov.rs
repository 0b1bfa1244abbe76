//! Restarted GMRES with right preconditioning.

use crate::scalar::{dot, norm2, Real};

use super::LinalgError;

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions<T> {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: T,
    pub restart: usize,
    pub max_iter: usize,
}

impl<T: Real> Default for GmresOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            restart: 50,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Solves `A x = b` where `apply` computes `A v` and `precond` applies an
/// approximate inverse. The returned residual is the true residual norm.
pub fn gmres<T, A, P>(
    apply: A,
    precond: P,
    b: &[T],
    x0: Option<&[T]>,
    opts: &GmresOptions<T>,
) -> Result<GmresOutcome<T>, LinalgError>
where
    T: Real,
    A: Fn(&[T]) -> Result<Vec<T>, LinalgError>,
    P: Fn(&[T]) -> Result<Vec<T>, LinalgError>,
{
    let n = b.len();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![T::zero(); n],
    };
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok(GmresOutcome {
            x: vec![T::zero(); n],
            iterations: 0,
            residual: T::zero(),
        });
    }
    let target = opts.tol * bnorm;
    let m = opts.restart.max(1);
    let mut total = 0usize;

    loop {
        let ax = apply(&x)?;
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= target {
            return Ok(GmresOutcome {
                x,
                iterations: total,
                residual: beta,
            });
        }
        if total >= opts.max_iter {
            return Err(LinalgError::NotConverged {
                iterations: total,
                residual: (beta / bnorm).to_f64_lossy(),
                tol: opts.tol.to_f64_lossy(),
            });
        }

        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v / beta).collect());
        let mut z_store: Vec<Vec<T>> = Vec::with_capacity(m);
        // Hessenberg columns after Givens rotation
        let mut hess: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<T> = Vec::with_capacity(m);
        let mut sn: Vec<T> = Vec::with_capacity(m);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            let z = precond(&basis[k])?;
            let mut w = apply(&z)?;
            z_store.push(z);
            let mut col = vec![T::zero(); k + 2];
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(&w, v);
                    col[i] += hij;
                    for (wj, &vj) in w.iter_mut().zip(v) {
                        *wj -= hij * vj;
                    }
                }
            }
            let wn = norm2(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
            let (c, s) = if denom == T::zero() {
                (T::one(), T::zero())
            } else {
                (col[k] / denom, col[k + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            col[k] = denom;
            col[k + 1] = T::zero();
            g[k + 1] = -s * g[k];
            g[k] = c * g[k];
            hess.push(col);
            k_used = k + 1;
            total += 1;
            if wn > T::zero() {
                basis.push(w.iter().map(|&v| v / wn).collect());
            }
            if g[k + 1].abs() <= target * T::lit(0.5) || wn == T::zero() || total >= opts.max_iter {
                break;
            }
        }

        // back substitution for the least-squares coefficients
        let mut yk = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= hess[j][i] * yk[j];
            }
            yk[i] = if hess[i][i] == T::zero() {
                T::zero()
            } else {
                acc / hess[i][i]
            };
        }
        for (j, yj) in yk.iter().enumerate() {
            for (xi, &zi) in x.iter_mut().zip(&z_store[j]) {
                *xi += *yj * zi;
            }
        }
    }
}
