//! Closed-form manufactured solution with positive, negative and zero regions.
//!
//! `ȳ = p(x1) q(x2)` with `p(x) = x⁴ s⁴ (1 + 2s)`, `s = x − β`, on `x ≤ β` and
//! `p = 0` beyond, `q = sin(π x2)`. The control, adjoint and target follow by
//! differentiating `ψ̄ = K(ȳ) = pq + σ p²q²/2` on each sign region, where
//! `σ = sign(ȳ)`. Since `q ≥ 0`, the sign is that of `p(x1)`, which also gives
//! the limit from the interior on `x2 ∈ {0, 1}`; on the interface `p = 0` the
//! limit from the positive side is used.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("beta must lie in [0.5, 1], got {0}")]
    Beta(f64),
    #[error("alpha must be positive and finite, got {0}")]
    Alpha(f64),
}

/// Dense polynomial, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly(vec![1.0]), |acc, _| acc.mul(self))
    }

    pub fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    /// `[f, f', f'', f''', f'''']`
    fn derivatives(&self) -> [Poly; 5] {
        let d1 = self.derivative();
        let d2 = d1.derivative();
        let d3 = d2.derivative();
        let d4 = d3.derivative();
        [self.clone(), d1, d2, d3, d4]
    }
}

/// Distance below which a point is treated as lying on an interface.
pub const INTERFACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    alpha: f64,
    beta: f64,
    /// `s ↦ s⁴(1 + 2s)` and its square, with derivatives, in powers of `s`.
    b: [Poly; 5],
    b2: [Poly; 5],
}

/// Values of the exact fields at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactPoint {
    pub y: f64,
    pub grad_y: [f64; 2],
    pub laplace_y: f64,
    pub psi: f64,
    pub laplace_psi: f64,
    pub u: f64,
    pub w: f64,
    pub grad_w: [f64; 2],
    pub laplace_w: f64,
    pub yd: f64,
}

pub fn manufactured(alpha: f64, beta: f64) -> Result<ManufacturedCase, CaseError> {
    ManufacturedCase::new(alpha, beta)
}

const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// Derivatives `x^m` for `k = 0..=4`.
fn monomial_derivs(x: f64, m: i32) -> [f64; 5] {
    std::array::from_fn(|k| {
        let k = k as i32;
        if k > m {
            0.0
        } else {
            let c: f64 = (0..k).map(|i| (m - i) as f64).product();
            c * x.powi(m - k)
        }
    })
}

/// Leibniz rule for the first four derivatives of a product.
fn leibniz(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|n| (0..=n).map(|k| BINOM[n][k] * a[k] * b[n - k]).sum())
}

impl ManufacturedCase {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, CaseError> {
        if !(0.5..=1.0).contains(&beta) {
            return Err(CaseError::Beta(beta));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CaseError::Alpha(alpha));
        }
        let b = Poly(vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        let b2 = b.mul(&b);
        Ok(Self {
            alpha,
            beta,
            b: b.derivatives(),
            b2: b2.derivatives(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Derivatives of `p` and `p²` at `x1`, with interface snapping.
    fn p_vals(&self, x1: f64) -> ([f64; 5], [f64; 5]) {
        if x1 > self.beta + INTERFACE_TOL {
            return ([0.0; 5], [0.0; 5]);
        }
        let mut s = x1 - self.beta;
        if s.abs() <= INTERFACE_TOL {
            s = 0.0;
        }
        let bv: [f64; 5] = std::array::from_fn(|k| self.b[k].eval(s));
        let b2v: [f64; 5] = std::array::from_fn(|k| self.b2[k].eval(s));
        let mut p = leibniz(&monomial_derivs(x1, 4), &bv);
        let p2 = leibniz(&monomial_derivs(x1, 8), &b2v);
        if (s + 0.5).abs() <= INTERFACE_TOL {
            p[0] = 0.0;
        }
        (p, p2)
    }

    pub fn y(&self, x1: f64, x2: f64) -> f64 {
        self.p_vals(x1).0[0] * (PI * x2).sin()
    }

    /// `sign(ȳ)`, taken from the sign of the `x1` profile so that the
    /// horizontal boundaries get the interior limit.
    pub fn sigma(&self, x1: f64, _x2: f64) -> f64 {
        if self.p_vals(x1).0[0] < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> ExactPoint {
        let (p, p2) = self.p_vals(x1);
        let (sn, cs) = (PI * x2).sin_cos();
        let (sn2, cs2) = (2.0 * PI * x2).sin_cos();
        let pi2 = PI * PI;
        let q = [sn, PI * cs, -pi2 * sn, -pi2 * PI * cs, pi2 * pi2 * sn];
        // derivatives of q² = (1 − cos 2πx)/2
        let q2 = [
            0.5 * (1.0 - cs2),
            PI * sn2,
            2.0 * pi2 * cs2,
            -4.0 * pi2 * PI * sn2,
            -8.0 * pi2 * pi2 * cs2,
        ];
        let y = p[0] * q[0];
        let sg = if p[0] < 0.0 { -1.0 } else { 1.0 };
        let h = 0.5 * sg;
        let grad_y = [p[1] * q[0], p[0] * q[1]];
        let laplace_y = p[2] * q[0] + p[0] * q[2];
        let psi = y + h * p2[0] * q2[0];
        let laplace_psi = laplace_y + h * (p2[2] * q2[0] + p2[0] * q2[2]);
        let grad_lpsi = [
            p[3] * q[0] + p[1] * q[2] + h * (p2[3] * q2[0] + p2[1] * q2[2]),
            p[2] * q[1] + p[0] * q[3] + h * (p2[2] * q2[1] + p2[0] * q2[3]),
        ];
        let bilaplace_psi = p[4] * q[0]
            + 2.0 * p[2] * q[2]
            + p[0] * q[4]
            + h * (p2[4] * q2[0] + 2.0 * p2[2] * q2[2] + p2[0] * q2[4]);
        let a = self.alpha;
        ExactPoint {
            y,
            grad_y,
            laplace_y,
            psi,
            laplace_psi,
            u: -laplace_psi,
            w: a * laplace_psi,
            grad_w: [a * grad_lpsi[0], a * grad_lpsi[1]],
            laplace_w: a * bilaplace_psi,
            yd: y + (1.0 + y.abs()) * a * bilaplace_psi,
        }
    }

    pub fn psi(&self, x1: f64, x2: f64) -> f64 {
        self.eval(x1, x2).psi
    }

    pub fn u(&self, x1: f64, x2: f64) -> f64 {
        self.eval(x1, x2).u
    }

    pub fn w(&self, x1: f64, x2: f64) -> f64 {
        self.eval(x1, x2).w
    }

    pub fn yd(&self, x1: f64, x2: f64) -> f64 {
        self.eval(x1, x2).yd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonsmooth::kirchhoff;

    #[test]
    fn poly_arithmetic() {
        let p = Poly(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(2.0), 17.0);
        assert_eq!(p.derivative(), Poly(vec![2.0, 6.0]));
        assert_eq!(p.mul(&Poly(vec![0.0, 1.0])), Poly(vec![0.0, 1.0, 2.0, 3.0]));
        assert_eq!(Poly(vec![1.0, 1.0]).pow(2), Poly(vec![1.0, 2.0, 1.0]));
    }

    #[test]
    fn examples_at_beta_085() {
        let c = manufactured(1e-6, 0.85).unwrap();
        for x2 in [0.1, 0.5, 0.93] {
            assert_eq!(c.y(0.85, x2), 0.0);
        }
        assert!(c.y(0.35, 0.5).abs() < 1e-18);
        let v = c.y(0.6, 0.5);
        assert!((v - 2.53125e-4).abs() < 1e-16, "{v}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(manufactured(1.0, 0.4).unwrap_err(), CaseError::Beta(0.4));
        assert!(manufactured(1.0, 1.01).is_err());
        assert!(manufactured(0.0, 0.8).is_err());
        assert!(manufactured(-1.0, 0.8).is_err());
        assert!(manufactured(1.0, 0.5).is_ok());
        assert!(manufactured(1.0, 1.0).is_ok());
    }

    #[test]
    fn sign_structure() {
        let c = manufactured(1e-6, 0.8).unwrap();
        // positive on (β − 1/2, β), negative on (0, β − 1/2), zero beyond β
        assert!(c.y(0.5, 0.3) > 0.0);
        assert!(c.y(0.2, 0.3) < 0.0);
        assert_eq!(c.y(0.9, 0.3), 0.0);
        assert_eq!(c.sigma(0.3, 0.5), 1.0);
        assert_eq!(c.sigma(0.9, 0.5), 1.0);
    }

    #[test]
    fn pointwise_identities() {
        for (alpha, beta) in [(1e-6, 0.8), (1e-2, 0.6), (1e-5, 1.0)] {
            let c = manufactured(alpha, beta).unwrap();
            for i in 1..40 {
                for j in 1..10 {
                    let (x1, x2) = (i as f64 / 40.0, j as f64 / 10.0);
                    let e = c.eval(x1, x2);
                    assert!((e.psi - kirchhoff(e.y)).abs() <= 1e-13);
                    assert_eq!(e.w, -alpha * e.u);
                    let g2 = e.grad_y[0].powi(2) + e.grad_y[1].powi(2);
                    let u_alt = -(1.0 + e.y.abs()) * e.laplace_y - e.y.signum() * g2;
                    if e.y != 0.0 {
                        assert!((e.u - u_alt).abs() <= 1e-12 * (1.0 + e.u.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn target_at_the_cut_line() {
        // the fourth derivative of p survives at x1 = β: y_d = 24 α β⁴ sin(π x2)
        let (alpha, beta) = (1e-2, 0.8);
        let c = manufactured(alpha, beta).unwrap();
        let yd = c.yd(beta, 0.5);
        assert!((yd - 24.0 * alpha * beta.powi(4)).abs() < 1e-12);
        assert_eq!(c.yd(beta + 1e-9, 0.5), 0.0);
    }
}
