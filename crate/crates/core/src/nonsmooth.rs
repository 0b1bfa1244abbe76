//! Scalar non-smooth calculus for the coefficient `a(t) = 1 + |t|`: one-sided
//! and directional derivatives, Clarke selections, mollification, the
//! Kirchhoff transform and the reduced nonlinearities `f1`, `f2`, `d`.

use thiserror::Error;

use crate::fem::{FemError, NodalFunction};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonsmoothError {
    #[error("mollification radius must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("quadrature order {0} is below the minimum of 16")]
    QuadratureOrder(usize),
    #[error("mollifier normalisation is off by {defect:e}")]
    Normalization { defect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Continuous, piecewise C¹ scalar function with finitely many kinks.
pub trait Pc1Scalar<T: Real>: Send + Sync {
    /// Sorted kink locations.
    fn breakpoints(&self) -> Vec<T>;

    fn eval(&self, t: T) -> T;

    fn deriv_onesided(&self, t: T, side: Side) -> T;

    /// `a'(t; h)`, positively homogeneous in `h`.
    fn dir_deriv(&self, t: T, h: T) -> T {
        if h > T::zero() {
            h * self.deriv_onesided(t, Side::Right)
        } else if h < T::zero() {
            h * self.deriv_onesided(t, Side::Left)
        } else {
            T::zero()
        }
    }

    /// An element of the Clarke generalised gradient at `t`.
    fn clarke_select(&self, t: T) -> T;

    /// Uniform positive lower bound `a_0`.
    fn lower_bound(&self) -> T;
}

/// `a(t) = 1 + |t|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AbsCoefficient;

pub fn abs_coefficient() -> AbsCoefficient {
    AbsCoefficient
}

impl<T: Real> Pc1Scalar<T> for AbsCoefficient {
    fn breakpoints(&self) -> Vec<T> {
        vec![T::zero()]
    }

    fn eval(&self, t: T) -> T {
        T::one() + t.abs()
    }

    fn deriv_onesided(&self, t: T, side: Side) -> T {
        if t > T::zero() || (t == T::zero() && side == Side::Right) {
            T::one()
        } else {
            -T::one()
        }
    }

    /// `+1` on `t ≥ 0`, `-1` otherwise.
    fn clarke_select(&self, t: T) -> T {
        if t >= T::zero() {
            T::one()
        } else {
            -T::one()
        }
    }

    fn lower_bound(&self) -> T {
        T::one()
    }
}

/// Constant coefficient, mostly useful for sanity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCoefficient<T>(pub T);

impl<T: Real> Pc1Scalar<T> for ConstantCoefficient<T> {
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }

    fn eval(&self, _: T) -> T {
        self.0
    }

    fn deriv_onesided(&self, _: T, _: Side) -> T {
        T::zero()
    }

    fn clarke_select(&self, _: T) -> T {
        T::zero()
    }

    fn lower_bound(&self) -> T {
        self.0
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Panels of the composite rule over the full support `[-1, 1]`.
const PANELS: usize = 16;

/// Unnormalised even bump supported on `[-1, 1]`.
fn bump(tau: f64) -> f64 {
    let s = 1.0 - tau * tau;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Convolution `a_ε = a * ψ_ε` of a PC¹ coefficient with a smooth bump.
#[derive(Debug, Clone)]
pub struct MollifiedScalar<T, A> {
    base: A,
    epsilon: T,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scale: f64,
}

pub fn mollify<T: Real, A: Pc1Scalar<T>>(
    base: A,
    epsilon: T,
    quad_order: usize,
) -> Result<MollifiedScalar<T, A>, NonsmoothError> {
    MollifiedScalar::new(base, epsilon, quad_order)
}

impl<T: Real, A: Pc1Scalar<T>> MollifiedScalar<T, A> {
    pub fn new(base: A, epsilon: T, quad_order: usize) -> Result<Self, NonsmoothError> {
        let eps = epsilon.to_f64_lossy();
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(NonsmoothError::InvalidEpsilon(eps));
        }
        if quad_order < 16 {
            return Err(NonsmoothError::QuadratureOrder(quad_order));
        }
        let (nodes, weights) = gauss_legendre(quad_order);
        let mut m = Self {
            base,
            epsilon,
            nodes,
            weights,
            scale: 1.0,
        };
        let mass = m.integrate(-1.0, 1.0, |_| 1.0);
        m.scale = 1.0 / mass;
        // the split rule used near kinks must agree with the plain one
        let split = m.integrate(-1.0, 0.3, |_| 1.0) + m.integrate(0.3, 1.0, |_| 1.0);
        let defect = (split - 1.0).abs();
        if defect > 1e-10 {
            return Err(NonsmoothError::Normalization { defect });
        }
        Ok(m)
    }

    pub fn base(&self) -> &A {
        &self.base
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// `∫ g(τ) ψ(τ) dτ` over `[lo, hi] ⊂ [-1, 1]`.
    fn integrate<G: Fn(f64) -> f64>(&self, lo: f64, hi: f64, g: G) -> f64 {
        let panels = ((PANELS as f64) * (hi - lo) / 2.0).ceil().max(1.0) as usize;
        let width = (hi - lo) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = lo + width * p as f64;
            let mid = a + 0.5 * width;
            let mut s = 0.0;
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                let tau = mid + 0.5 * width * x;
                s += w * g(tau) * bump(tau);
            }
            acc += 0.5 * width * s;
        }
        acc * self.scale
    }

    /// Subintervals of `[-1, 1]` on which `τ ↦ a(t - ετ)` is smooth.
    fn pieces(&self, t: T) -> Vec<(f64, f64)> {
        let eps = self.epsilon.to_f64_lossy();
        let t = t.to_f64_lossy();
        let mut cuts: Vec<f64> = self
            .base
            .breakpoints()
            .into_iter()
            .map(|b| (t - b.to_f64_lossy()) / eps)
            .filter(|&c| c > -1.0 && c < 1.0)
            .collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut out = Vec::with_capacity(cuts.len() + 1);
        let mut lo = -1.0;
        for c in cuts {
            if c > lo {
                out.push((lo, c));
                lo = c;
            }
        }
        out.push((lo, 1.0));
        out
    }

    pub fn eval(&self, t: T) -> T {
        let eps = self.epsilon.to_f64_lossy();
        let tf = t.to_f64_lossy();
        let v: f64 = self
            .pieces(t)
            .into_iter()
            .map(|(lo, hi)| {
                self.integrate(lo, hi, |tau| {
                    self.base.eval(T::lit(tf - eps * tau)).to_f64_lossy()
                })
            })
            .sum();
        T::lit(v)
    }

    pub fn deriv(&self, t: T) -> T {
        let eps = self.epsilon.to_f64_lossy();
        let tf = t.to_f64_lossy();
        let v: f64 = self
            .pieces(t)
            .into_iter()
            .map(|(lo, hi)| {
                self.integrate(lo, hi, |tau| {
                    // quadrature nodes are interior, so either side is the piece derivative
                    self.base
                        .deriv_onesided(T::lit(tf - eps * tau), Side::Right)
                        .to_f64_lossy()
                })
            })
            .sum();
        T::lit(v)
    }
}

impl<T: Real, A: Pc1Scalar<T>> Pc1Scalar<T> for MollifiedScalar<T, A> {
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }

    fn eval(&self, t: T) -> T {
        MollifiedScalar::eval(self, t)
    }

    fn deriv_onesided(&self, t: T, _: Side) -> T {
        self.deriv(t)
    }

    fn clarke_select(&self, t: T) -> T {
        self.deriv(t)
    }

    fn lower_bound(&self) -> T {
        self.base.lower_bound()
    }
}

/// `K(t) = t + t|t|/2`, the primitive of `1 + |t|`.
#[inline]
pub fn kirchhoff<T: Real>(t: T) -> T {
    t + t * t.abs() * T::lit(0.5)
}

/// Inverse of [`kirchhoff`], written without cancellation near zero.
#[inline]
pub fn kirchhoff_inverse<T: Real>(psi: T) -> T {
    let two = T::lit(2.0);
    let m = psi.abs();
    let r = two * m / (T::one() + (T::one() + two * m).sqrt());
    if psi < T::zero() {
        -r
    } else {
        r
    }
}

/// `f1(ψ) = y / (1 + |y|)` with `y = K⁻¹(ψ)`.
#[inline]
pub fn f1<T: Real>(psi: T) -> T {
    let y = kirchhoff_inverse(psi);
    y / (T::one() + y.abs())
}

/// `f2(ψ) = 1 / (1 + |y|) = 1 / sqrt(1 + 2|ψ|)`.
#[inline]
pub fn f2<T: Real>(psi: T) -> T {
    T::one() / (T::one() + T::lit(2.0) * psi.abs()).sqrt()
}

/// Derivative of `ψ ↦ f1(ψ) - yd·f2(ψ)`, using the `ψ ≥ 0` branch at zero.
#[inline]
pub fn newton_weight<T: Real>(psi: T, yd: T) -> T {
    let s = T::one() + T::lit(2.0) * psi.abs();
    let s3 = s * s.sqrt();
    if psi >= T::zero() {
        (T::one() + yd) / s3
    } else {
        (T::one() - yd) / s3
    }
}

/// Nodewise `a'(y_i; h_i)`.
pub fn dir_deriv_superposition<T: Real, A: Pc1Scalar<T>>(
    a: &A,
    y: &NodalFunction<T>,
    h: &NodalFunction<T>,
) -> Result<NodalFunction<T>, FemError> {
    y.zip_map(h, |yi, hi| a.dir_deriv(yi, hi))
}

/// Nodewise Clarke selection of `a` along `y`.
pub fn clarke_field<T: Real, A: Pc1Scalar<T>>(a: &A, y: &NodalFunction<T>) -> NodalFunction<T> {
    y.map(|t| a.clarke_select(t))
}
