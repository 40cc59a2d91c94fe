//! Complex polynomials and rational functions.
//!
//! Coefficients are stored in ascending degree order. The zero polynomial has
//! an empty coefficient list; [`Poly::degree`] returns `None` for it. Ring
//! arithmetic is generic over the evaluation scalar so the same code runs on
//! numeric coefficients and on dual-number coefficients.

use crate::scalar::{Real, Scalar};
use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("zero polynomial has no well-defined roots")]
    ZeroPolynomial,
    #[error("constant polynomial has no roots")]
    ConstantPolynomial,
    #[error("evaluation too close to a pole: |den(u)| = {den_mag:.3e} at u = {u_re}+{u_im}i")]
    PoleEvaluation { den_mag: f64, u_re: f64, u_im: f64 },
    #[error("clustered roots: minimum separation {min_sep:.3e} below {tol:.3e}")]
    ClusteredRoots { min_sep: f64, tol: f64 },
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
}

/// Relative threshold for trimming trailing coefficients. Must detect genuine
/// degree drop (a leading coefficient that vanishes identically) without
/// eating honest small coefficients.
pub const TRIM_REL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T> Poly<T> {
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }
}

impl<T: Scalar> Poly<T> {
    /// Builds from ascending coefficients without trimming.
    pub fn from_coeffs_raw(coeffs: Vec<T>) -> Self {
        Poly { coeffs }
    }

    pub fn zero_poly() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Poly { coeffs: vec![c] }
    }

    /// The monomial `c·u^k`.
    pub fn monomial(c: T, k: usize) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = c;
        Poly { coeffs }
    }

    /// Horner evaluation at `u`.
    pub fn eval(&self, u: &T) -> T {
        let mut acc = T::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * u.clone() + c.clone();
        }
        acc
    }

    /// Coefficient-wise derivative: output coefficient `k` is `(k+1)·c_{k+1}`.
    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero_poly();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| T::of_f64(k as f64) * c.clone())
            .collect();
        Poly { coeffs }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                let b = rhs.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                a + b
            })
            .collect();
        Poly { coeffs }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                let b = rhs.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                a - b
            })
            .collect();
        Poly { coeffs }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        if self.coeffs.is_empty() || rhs.coeffs.is_empty() {
            return Self::zero_poly();
        }
        let mut coeffs = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly { coeffs }
    }

    pub fn scale(&self, c: &T) -> Self {
        Poly {
            coeffs: self.coeffs.iter().map(|a| a.clone() * c.clone()).collect(),
        }
    }
}

impl<R: Real> Poly<Complex<R>> {
    /// Builds from ascending complex coefficients, trimming trailing
    /// coefficients below `TRIM_REL` relative to the largest magnitude.
    pub fn from_coeffs(coeffs: Vec<Complex<R>>) -> Self {
        Poly { coeffs }.trimmed()
    }

    /// Largest coefficient magnitude (polynomial scale); zero for the zero
    /// polynomial.
    pub fn coeff_scale(&self) -> R {
        self.coeffs
            .iter()
            .map(|c| c.norm())
            .fold(R::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn trimmed(&self) -> Self {
        let scale = self.coeff_scale();
        let tol = scale * R::of(TRIM_REL);
        let mut coeffs = self.coeffs.clone();
        while let Some(last) = coeffs.last() {
            if last.norm() <= tol {
                coeffs.pop();
            } else {
                break;
            }
        }
        Poly { coeffs }
    }

    /// Degree after trimming; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        let t = self.trimmed();
        if t.coeffs.is_empty() {
            None
        } else {
            Some(t.coeffs.len() - 1)
        }
    }

    pub fn is_zero_poly(&self) -> bool {
        self.degree().is_none()
    }

    pub fn leading(&self) -> Option<Complex<R>> {
        self.trimmed().coeffs.last().cloned()
    }

    /// Monic product `∏ (u - r_i)`.
    pub fn from_roots(roots: &[Complex<R>]) -> Self {
        let mut p = Poly::constant(Complex::new(R::one(), R::zero()));
        for r in roots {
            p = p.mul(&Poly::from_coeffs_raw(vec![
                -*r,
                Complex::new(R::one(), R::zero()),
            ]));
        }
        p
    }
}

// Operator impls so polynomial matrices multiply through the same generic
// code as scalar matrices.
impl<T: Scalar> std::ops::Add for Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: Self) -> Poly<T> {
        Poly::add(&self, &rhs)
    }
}

impl<T: Scalar> std::ops::Sub for Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: Self) -> Poly<T> {
        Poly::sub(&self, &rhs)
    }
}

impl<T: Scalar> std::ops::Mul for Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: Self) -> Poly<T> {
        Poly::mul(&self, &rhs)
    }
}

impl<T: Scalar> std::ops::Neg for Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.scale(&-T::one())
    }
}

impl<T: Scalar> Zero for Poly<T> {
    fn zero() -> Self {
        Poly::zero_poly()
    }
    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }
}

impl<T: Scalar> num_traits::One for Poly<T> {
    fn one() -> Self {
        Poly::constant(T::one())
    }
}

/// Ratio of two polynomials; the denominator is never the zero polynomial.
#[derive(Clone, Debug)]
pub struct RationalFn<T> {
    pub num: Poly<T>,
    pub den: Poly<T>,
}

impl<T: Scalar> RationalFn<T> {
    /// Evaluation without a pole guard; use [`RationalFn::eval`] on complex
    /// scalars when the guard matters.
    pub fn eval_unchecked(&self, u: &T) -> T {
        self.num.eval(u) / self.den.eval(u)
    }

    /// Value of the `u`-derivative: `(n'd - nd')/d²`.
    pub fn deriv_unchecked(&self, u: &T) -> T {
        let n = self.num.eval(u);
        let d = self.den.eval(u);
        let np = self.num.derivative().eval(u);
        let dp = self.den.derivative().eval(u);
        (np * d.clone() - n * dp) / (d.clone() * d)
    }
}

impl<R: Real> RationalFn<Complex<R>> {
    pub fn new(num: Poly<Complex<R>>, den: Poly<Complex<R>>) -> Self {
        assert!(!den.is_zero_poly(), "denominator must not be the zero polynomial");
        RationalFn { num, den }
    }

    fn pole_guard(&self, u: Complex<R>) -> Result<Complex<R>, NumError> {
        let d = self.den.eval(&u);
        let tol = self.den.coeff_scale() * R::of(1e-12);
        if d.norm() <= tol {
            return Err(NumError::PoleEvaluation {
                den_mag: d.norm().to_f64().unwrap_or(0.0),
                u_re: u.re.to_f64().unwrap_or(f64::NAN),
                u_im: u.im.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(d)
    }

    /// `num(u)/den(u)`, failing when `u` is too close to a pole.
    pub fn eval(&self, u: Complex<R>) -> Result<Complex<R>, NumError> {
        let d = self.pole_guard(u)?;
        Ok(self.num.eval(&u) / d)
    }

    /// Pole-guarded `u`-derivative.
    pub fn deriv(&self, u: Complex<R>) -> Result<Complex<R>, NumError> {
        self.pole_guard(u)?;
        Ok(self.deriv_unchecked(&u))
    }
}
