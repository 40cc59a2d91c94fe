//! Static chain configuration: model kind, pole positions, twist matrix, and
//! the per-site coordinate layout.

use crate::scalar::Real;
use num_complex::Complex;
use thiserror::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Rational,
    Trigonometric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("pole positions must be pairwise distinct (|nu_{i} - nu_{j}| = {dist:.3e})")]
    CoincidingPoles { i: usize, j: usize, dist: f64 },
    #[error("trigonometric poles must be nonzero and finite (nu_{index})")]
    InvalidTrigPole { index: usize },
    #[error("trigonometric twist matrix must be diagonal")]
    NonDiagonalTrigTwist,
    #[error("chain needs at least one site")]
    EmptyChain,
}

/// Constant 2x2 twist matrix multiplying the chain Lax product.
#[derive(Clone, Debug)]
pub struct TwistMatrix<R: Real> {
    c: [[Complex<R>; 2]; 2],
    det: Complex<R>,
    degenerate: bool,
}

impl<R: Real> TwistMatrix<R> {
    pub fn new(c: [[Complex<R>; 2]; 2]) -> Self {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let scale = c
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(R::zero(), |a, b| if b > a { b } else { a });
        let degenerate = det.norm() <= R::of(1e-12) * scale * scale.max(R::one());
        TwistMatrix { c, det, degenerate }
    }

    pub fn diagonal(c11: Complex<R>, c22: Complex<R>) -> Self {
        let zero = Complex::new(R::zero(), R::zero());
        Self::new([[c11, zero], [zero, c22]])
    }

    pub fn identity() -> Self {
        let one = Complex::new(R::one(), R::zero());
        Self::diagonal(one, one)
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<R> {
        self.c[i][j]
    }

    pub fn entries(&self) -> &[[Complex<R>; 2]; 2] {
        &self.c
    }

    pub fn det(&self) -> Complex<R> {
        self.det
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn is_diagonal(&self) -> bool {
        let scale = self.scale().max(R::one());
        self.c[0][1].norm() <= R::of(1e-14) * scale && self.c[1][0].norm() <= R::of(1e-14) * scale
    }

    pub fn scale(&self) -> R {
        self.c
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(R::zero(), |a, b| if b > a { b } else { a })
    }
}

/// Per-site coordinate slots, in storage order.
///
/// Rational sites carry the four matrix entries of the residue at the site
/// pole; trigonometric sites carry the six generators of the quadratic
/// one-site algebra.
pub const RATIONAL_SLOTS: [&str; 4] = ["S11", "S12", "S21", "S22"];
pub const TRIG_SLOTS: [&str; 6] = ["S01", "S02", "S11", "S22", "S12", "S21"];

/// Full static configuration of a chain.
#[derive(Clone, Debug)]
pub struct ChainSpec<R: Real> {
    model: ModelKind,
    poles: Vec<Complex<R>>,
    twist: TwistMatrix<R>,
}

impl<R: Real> ChainSpec<R> {
    pub fn new(
        model: ModelKind,
        poles: Vec<Complex<R>>,
        twist: TwistMatrix<R>,
    ) -> Result<Self, SpecError> {
        if poles.is_empty() {
            return Err(SpecError::EmptyChain);
        }
        for i in 0..poles.len() {
            for j in (i + 1)..poles.len() {
                let dist = (poles[i] - poles[j]).norm();
                if dist <= R::of(1e-9) {
                    return Err(SpecError::CoincidingPoles {
                        i,
                        j,
                        dist: dist.to_f64().unwrap_or(0.0),
                    });
                }
            }
        }
        if model == ModelKind::Trigonometric {
            for (index, nu) in poles.iter().enumerate() {
                if nu.norm() <= R::of(1e-12) || !nu.re.is_finite() || !nu.im.is_finite() {
                    return Err(SpecError::InvalidTrigPole { index });
                }
            }
            if !twist.is_diagonal() {
                return Err(SpecError::NonDiagonalTrigTwist);
            }
        }
        Ok(ChainSpec { model, poles, twist })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn sites(&self) -> usize {
        self.poles.len()
    }

    pub fn poles(&self) -> &[Complex<R>] {
        &self.poles
    }

    pub fn twist(&self) -> &TwistMatrix<R> {
        &self.twist
    }

    pub fn coords_per_site(&self) -> usize {
        match self.model {
            ModelKind::Rational => 4,
            ModelKind::Trigonometric => 6,
        }
    }

    pub fn coord_count(&self) -> usize {
        self.sites() * self.coords_per_site()
    }

    /// Flat index of slot `slot` on site `site` (both 0-based).
    pub fn coord_index(&self, site: usize, slot: usize) -> usize {
        debug_assert!(slot < self.coords_per_site());
        site * self.coords_per_site() + slot
    }

    pub fn slot_names(&self) -> &'static [&'static str] {
        match self.model {
            ModelKind::Rational => &RATIONAL_SLOTS,
            ModelKind::Trigonometric => &TRIG_SLOTS,
        }
    }

    /// Human-readable coordinate name, e.g. `S12[2]`.
    pub fn coord_name(&self, index: usize) -> String {
        let per = self.coords_per_site();
        format!("{}[{}]", self.slot_names()[index % per], index / per + 1)
    }
}

/// Rational slot indices within a site block.
pub mod rat {
    pub const S11: usize = 0;
    pub const S12: usize = 1;
    pub const S21: usize = 2;
    pub const S22: usize = 3;
}

/// Trigonometric slot indices within a site block.
pub mod trig {
    pub const S01: usize = 0;
    pub const S02: usize = 1;
    pub const S11: usize = 2;
    pub const S22: usize = 3;
    pub const S12: usize = 4;
    pub const S21: usize = 5;
}
