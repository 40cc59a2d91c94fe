//! Scalar abstractions.
//!
//! Everything downstream (polynomials, Lax assembly, observables) is written
//! against two layers of genericity:
//!
//! * [`Real`] — the base floating-point type (`f32` or `f64`);
//! * [`Scalar`] — the evaluation scalar, either a plain complex number or a
//!   dual number carrying a gradient. Writing expression code once against
//!   this trait makes exact forward-mode derivatives available by seeding.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, One, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Base floating-point type.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Shorthand for lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Evaluation scalar over a base real type.
///
/// Implemented by `Complex<R>` and by [`crate::dual::Dual`] over any scalar,
/// so dual numbers nest (second derivatives come from `Dual<Dual<_>>`).
pub trait Scalar:
    Clone
    + Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type R: Real;

    /// Injects a complex constant.
    fn from_complex(z: Complex<Self::R>) -> Self;

    /// Injects a real constant given as `f64`.
    fn of_f64(x: f64) -> Self {
        Self::from_complex(Complex::new(Self::R::of(x), Self::R::zero()))
    }
}

impl<R: Real> Scalar for Complex<R> {
    type R = R;

    fn from_complex(z: Complex<R>) -> Self {
        z
    }
}

/// Complex constant from `f64` parts.
pub fn cplx<R: Real>(re: f64, im: f64) -> Complex<R> {
    Complex::new(R::of(re), R::of(im))
}
