//! Numerical toolkit for classical XXX (rational) and XXZ (trigonometric)
//! Heisenberg spin chains with twisted boundary conditions.
//!
//! The crate builds chain Lax matrices from one-site blocks, verifies the
//! quadratic r-matrix bracket, constructs separated variables in both the
//! standard convention (roots of the lower-left Lax entry) and the reversed
//! one (roots of the upper-left entry), checks the quasi-canonical bracket
//! pattern and the equations of separation for degenerate twists, integrates
//! the commuting flows, verifies the Abel-type relations, and implements the
//! explicit two-site reconstruction maps.
//!
//! All numerics are generic over the base real type through [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix the common `f64` instantiation.

pub mod chain;
pub mod dual;
pub mod flows;
pub mod model;
pub mod poisson;
pub mod poly;
pub mod reconstruct;
pub mod roots;
pub mod scalar;
pub mod sov;

pub use chain::{ChainSpec, ModelKind, SpecError, TwistMatrix};
pub use poisson::{build_bivector, Observable, PhasePoint, PoissonBivector};
pub use poly::{NumError, Poly, RationalFn};
pub use scalar::{Real, Scalar};

/// Default complex scalar.
pub type C64 = num_complex::Complex<f64>;
/// Single-precision complex scalar.
pub type C32 = num_complex::Complex<f32>;
/// Default dual number (value plus gradient) over [`C64`].
pub type Dual64 = dual::Dual<C64>;

/// The seeded generator used for all reproducible sampling.
pub type SeededRng = rand_xoshiro::Xoshiro256PlusPlus;

/// Builds the crate-wide deterministic generator from a seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand_xoshiro::rand_core::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
