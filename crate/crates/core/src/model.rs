//! r-matrices, one-site and chain Lax matrices, integrals of motion, Casimir
//! generating functions, and the identities tying them together.
//!
//! Conventions, fixed once and used everywhere:
//!
//! * rational one-site Lax: `L(u) = Id + S/(u - nu)` where `S` is the 2x2
//!   matrix of site coordinates placed verbatim (entry (i,j) is `S_ij`); the
//!   per-site brackets are then the standard gl(2) relations and the chain
//!   satisfies the quadratic bracket with the rational r-matrix;
//! * trigonometric one-site Lax: diagonal `S0i + (1/2)(nu+u)/(nu-u) Sii`,
//!   entry (1,2) `u/(nu-u) S21`, entry (2,1) `nu/(nu-u) S12`;
//! * chain Lax `L(u) = L^(1) ... L^(N) C` stored over the common denominator
//!   `prod_i (nu_i - u)` (rational) or `prod_i (u - nu_i)` (trigonometric);
//! * rational integrals `I_1..I_N`: coefficients of the trace numerator in
//!   descending powers below the leading `(-1)^N (c11+c22) u^N`;
//! * trigonometric integrals `I_0..I_N`: coefficients of `2^N` times the
//!   trace numerator, which is the normalization in which the product
//!   closed forms for `I_0`, `I_N` and the `I_0 I_N` relation hold exactly.

use crate::chain::{rat, trig, ChainSpec, ModelKind, TwistMatrix};
use crate::poisson::{Observable, PhasePoint, PoissonBivector};
use crate::poly::{NumError, Poly, RationalFn};
use crate::scalar::{Real, Scalar};
use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("spectral parameters coincide: |u - v| = {dist:.3e}")]
    CoincidingSpectralParameters { dist: f64 },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Minimal 2x2 matrix over any scalar.
#[derive(Clone, Debug)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T> Mat2<T>
where
    T: Clone
        + Zero
        + One
        + std::ops::Add<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::Sub<Output = T>,
{
    pub fn identity() -> Self {
        Mat2([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = [[T::zero(), T::zero()], [T::zero(), T::zero()]];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = self.0[i][0].clone() * rhs.0[0][j].clone()
                    + self.0[i][1].clone() * rhs.0[1][j].clone();
            }
        }
        Mat2(out)
    }

    pub fn trace(&self) -> T {
        self.0[0][0].clone() + self.0[1][1].clone()
    }

    pub fn det(&self) -> T {
        self.0[0][0].clone() * self.0[1][1].clone()
            - self.0[0][1].clone() * self.0[1][0].clone()
    }
}

// ---------------------------------------------------------------------------
// r-matrices
// ---------------------------------------------------------------------------

/// Component access to a classical r-matrix in the basis X_ij ⊗ X_kl.
pub trait RMatrixLike<R: Real> {
    /// Component r_{ij,kl}(u, v); indices are 1-based as in the component
    /// labels, i.e. `component(1,2,2,1,..)` is the coefficient of X12 ⊗ X21.
    fn component(
        &self,
        i: usize,
        j: usize,
        k: usize,
        l: usize,
        u: Complex<R>,
        v: Complex<R>,
    ) -> Result<Complex<R>, ModelError>;

    /// The 4x4 matrix with rows (i,k) and columns (j,l).
    fn matrix4(&self, u: Complex<R>, v: Complex<R>) -> Result<[[Complex<R>; 4]; 4], ModelError> {
        let mut m = [[Complex::new(R::zero(), R::zero()); 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m[2 * i + k][2 * j + l] =
                            self.component(i + 1, j + 1, k + 1, l + 1, u, v)?;
                    }
                }
            }
        }
        Ok(m)
    }
}

/// The model's standard r-matrix.
#[derive(Copy, Clone, Debug)]
pub struct RMatrix<R: Real> {
    kind: ModelKind,
    _marker: std::marker::PhantomData<R>,
}

pub fn rmatrix<R: Real>(spec: &ChainSpec<R>) -> RMatrix<R> {
    RMatrix { kind: spec.model(), _marker: std::marker::PhantomData }
}

pub fn rmatrix_of_kind<R: Real>(kind: ModelKind) -> RMatrix<R> {
    RMatrix { kind, _marker: std::marker::PhantomData }
}

fn guard_uv<R: Real>(u: Complex<R>, v: Complex<R>) -> Result<Complex<R>, ModelError> {
    let diff = u - v;
    let scale = u.norm().max(v.norm()).max(R::one());
    if diff.norm() <= R::of(1e-12) * scale {
        return Err(ModelError::CoincidingSpectralParameters {
            dist: diff.norm().to_f64().unwrap_or(0.0),
        });
    }
    Ok(diff)
}

impl<R: Real> RMatrixLike<R> for RMatrix<R> {
    fn component(
        &self,
        i: usize,
        j: usize,
        k: usize,
        l: usize,
        u: Complex<R>,
        v: Complex<R>,
    ) -> Result<Complex<R>, ModelError> {
        let diff = guard_uv(u, v)?;
        let zero = Complex::new(R::zero(), R::zero());
        Ok(match self.kind {
            // Permutation over (u - v): nonzero components r_{ij,ji}.
            ModelKind::Rational => {
                if k == j && l == i {
                    Complex::new(R::one(), R::zero()) / diff
                } else {
                    zero
                }
            }
            ModelKind::Trigonometric => {
                if i == j && k == l && i == k {
                    (u + v) / diff * Complex::new(R::of(0.5), R::zero())
                } else if i == 1 && j == 2 && k == 2 && l == 1 {
                    u / diff
                } else if i == 2 && j == 1 && k == 1 && l == 2 {
                    v / diff
                } else {
                    zero
                }
            }
        })
    }
}

/// Max violation of each of the seven component conditions under which the
/// separating-function algebra is symmetric.
#[derive(Clone, Debug)]
pub struct SymmetryReport<R: Real> {
    pub max_violation: [R; 7],
    pub samples: usize,
}

impl<R: Real> SymmetryReport<R> {
    pub fn worst(&self) -> R {
        self.max_violation
            .iter()
            .fold(R::zero(), |a, b| if *b > a { *b } else { a })
    }
}

pub fn check_symmetry_conditions<R: Real, M: RMatrixLike<R>, G: rand::Rng>(
    r: &M,
    samples: usize,
    rng: &mut G,
) -> Result<SymmetryReport<R>, ModelError> {
    let mut max_violation = [R::zero(); 7];
    let mut done = 0usize;
    while done < samples {
        let u = Complex::new(R::of(rng.gen_range(-2.0..2.0)), R::of(rng.gen_range(-2.0..2.0)));
        let v = Complex::new(R::of(rng.gen_range(-2.0..2.0)), R::of(rng.gen_range(-2.0..2.0)));
        if guard_uv(u, v).is_err() {
            continue;
        }
        done += 1;
        let conds = [
            r.component(2, 1, 2, 1, u, v)?,
            r.component(2, 1, 1, 1, u, v)?,
            r.component(1, 1, 2, 1, u, v)?,
            r.component(1, 2, 1, 2, u, v)?,
            r.component(1, 2, 2, 2, u, v)?,
            r.component(2, 2, 1, 2, u, v)?,
            r.component(2, 2, 2, 2, u, v)? - r.component(1, 1, 1, 1, u, v)?,
        ];
        for (slot, c) in conds.iter().enumerate() {
            let n = c.norm();
            if n > max_violation[slot] {
                max_violation[slot] = n;
            }
        }
    }
    Ok(SymmetryReport { max_violation, samples })
}

/// Frobenius norm of [r(u,v), C ⊗ C] maximized over samples, with the scale
/// it should be compared against.
#[derive(Clone, Debug)]
pub struct TwistReport<R: Real> {
    pub max_commutator: R,
    pub scale: R,
    pub samples: usize,
}

impl<R: Real> TwistReport<R> {
    pub fn relative(&self) -> R {
        self.max_commutator / self.scale
    }
}

pub fn check_twist_compatibility<R: Real, M: RMatrixLike<R>, G: rand::Rng>(
    r: &M,
    c: &TwistMatrix<R>,
    samples: usize,
    rng: &mut G,
) -> Result<TwistReport<R>, ModelError> {
    let mut cc = [[Complex::new(R::zero(), R::zero()); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    cc[2 * i + k][2 * j + l] = c.entry(i, j) * c.entry(k, l);
                }
            }
        }
    }
    let mut worst = R::zero();
    let mut scale = R::of(1e-30);
    let mut done = 0usize;
    while done < samples {
        let u = Complex::new(R::of(rng.gen_range(-2.0..2.0)), R::of(rng.gen_range(-2.0..2.0)));
        let v = Complex::new(R::of(rng.gen_range(-2.0..2.0)), R::of(rng.gen_range(-2.0..2.0)));
        if guard_uv(u, v).is_err() {
            continue;
        }
        done += 1;
        let rm = r.matrix4(u, v)?;
        let mut fro = R::zero();
        let mut sc = R::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut rc = Complex::new(R::zero(), R::zero());
                let mut cr = Complex::new(R::zero(), R::zero());
                for k in 0..4 {
                    rc = rc + rm[i][k] * cc[k][j];
                    cr = cr + cc[i][k] * rm[k][j];
                }
                let d = rc - cr;
                fro = fro + d.norm_sqr();
                sc = sc + rc.norm_sqr() + cr.norm_sqr();
            }
        }
        let fro = fro.sqrt();
        let sc = sc.sqrt().max(R::of(1e-30));
        if fro > worst {
            worst = fro;
        }
        if sc > scale {
            scale = sc;
        }
    }
    Ok(TwistReport { max_commutator: worst, scale, samples })
}

// ---------------------------------------------------------------------------
// Lax matrices
// ---------------------------------------------------------------------------

/// Numerator matrix of one site at spectral parameter `u`, generic over the
/// evaluation scalar. Rational sites are taken over `(u - nu)`, trigonometric
/// sites over `(nu - u)`.
pub fn site_numerator_at<R: Real, T: Scalar<R = R>>(
    spec: &ChainSpec<R>,
    site: usize,
    coords: &[T],
    u: Complex<R>,
) -> Mat2<T> {
    let nu = spec.poles()[site];
    let uu = T::from_complex(u);
    match spec.model() {
        ModelKind::Rational => {
            let c = |slot: usize| coords[spec.coord_index(site, slot)].clone();
            let shift = uu - T::from_complex(nu);
            Mat2([
                [shift.clone() + c(rat::S11), c(rat::S12)],
                [c(rat::S21), shift + c(rat::S22)],
            ])
        }
        ModelKind::Trigonometric => {
            let c = |slot: usize| coords[spec.coord_index(site, slot)].clone();
            let half = T::of_f64(0.5);
            let nn = T::from_complex(nu);
            let d11 = uu.clone() * (half.clone() * c(trig::S11) - c(trig::S01))
                + nn.clone() * (c(trig::S01) + half.clone() * c(trig::S11));
            let d22 = uu.clone() * (half.clone() * c(trig::S22) - c(trig::S02))
                + nn.clone() * (c(trig::S02) + half * c(trig::S22));
            Mat2([
                [d11, uu * c(trig::S21)],
                [nn * c(trig::S12), d22],
            ])
        }
    }
}

/// Chain numerator at fixed `u` over the model's displayed denominator
/// convention, optionally multiplied by the twist.
pub fn chain_numerator_at<R: Real, T: Scalar<R = R>>(
    spec: &ChainSpec<R>,
    coords: &[T],
    u: Complex<R>,
    twisted: bool,
) -> Mat2<T> {
    let mut m = Mat2::<T>::identity();
    for site in 0..spec.sites() {
        m = m.mul(&site_numerator_at(spec, site, coords, u));
    }
    if twisted {
        let c = spec.twist();
        let tw = Mat2([
            [T::from_complex(c.entry(0, 0)), T::from_complex(c.entry(0, 1))],
            [T::from_complex(c.entry(1, 0)), T::from_complex(c.entry(1, 1))],
        ]);
        m = m.mul(&tw);
    }
    // Both conventions flip the raw product denominator by (-1)^N.
    if spec.sites() % 2 == 1 {
        m = Mat2([
            [-m.0[0][0].clone(), -m.0[0][1].clone()],
            [-m.0[1][0].clone(), -m.0[1][1].clone()],
        ]);
    }
    m
}

/// Value of the denominator polynomial at `u` under the model convention.
pub fn denominator_at<R: Real, T: Scalar<R = R>>(spec: &ChainSpec<R>, u: Complex<R>) -> T {
    let uu = T::from_complex(u);
    let mut acc = T::one();
    for nu in spec.poles() {
        let f = match spec.model() {
            ModelKind::Rational => T::from_complex(*nu) - uu.clone(),
            ModelKind::Trigonometric => uu.clone() - T::from_complex(*nu),
        };
        acc = acc * f;
    }
    acc
}

/// Denominator polynomial under the model convention.
pub fn denominator_poly<R: Real>(spec: &ChainSpec<R>) -> Poly<Complex<R>> {
    let one = Complex::new(R::one(), R::zero());
    let mut p = Poly::constant(one);
    for nu in spec.poles() {
        let lin = match spec.model() {
            ModelKind::Rational => Poly::from_coeffs_raw(vec![*nu, -one]),
            ModelKind::Trigonometric => Poly::from_coeffs_raw(vec![-*nu, one]),
        };
        p = p.mul(&lin);
    }
    p
}

/// 2x2 matrix of rational functions of `u` with a common denominator; the
/// coefficients are numbers obtained by evaluating the coordinate
/// polynomials at a phase point.
#[derive(Clone, Debug)]
pub struct LaxMatrix<R: Real> {
    pub num: [[Poly<Complex<R>>; 2]; 2],
    pub den: Poly<Complex<R>>,
}

impl<R: Real> LaxMatrix<R> {
    pub fn entry(&self, i: usize, j: usize) -> RationalFn<Complex<R>> {
        RationalFn::new(self.num[i][j].clone(), self.den.clone())
    }

    /// Entry values at `u` (pole-guarded).
    pub fn eval(&self, u: Complex<R>) -> Result<Mat2<Complex<R>>, NumError> {
        let d = self.den.eval(&u);
        let tol = self.den.coeff_scale() * R::of(1e-12);
        if d.norm() <= tol {
            return Err(NumError::PoleEvaluation {
                den_mag: d.norm().to_f64().unwrap_or(0.0),
                u_re: u.re.to_f64().unwrap_or(f64::NAN),
                u_im: u.im.to_f64().unwrap_or(f64::NAN),
            });
        }
        let e = |i: usize, j: usize| self.num[i][j].eval(&u) / d;
        Ok(Mat2([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]))
    }

    pub fn trace_fn(&self) -> RationalFn<Complex<R>> {
        RationalFn::new(self.num[0][0].add(&self.num[1][1]), self.den.clone())
    }
}

/// Polynomial numerator matrix of one site (degree ≤ 1 entries) at a phase
/// point, in the site-local denominator.
fn site_numerator_poly<R: Real>(
    spec: &ChainSpec<R>,
    site: usize,
    xi: &PhasePoint<R>,
) -> Mat2<Poly<Complex<R>>> {
    let nu = spec.poles()[site];
    let zero = Complex::new(R::zero(), R::zero());
    let one = Complex::new(R::one(), R::zero());
    let c = |slot: usize| xi.coords[spec.coord_index(site, slot)];
    match spec.model() {
        ModelKind::Rational => Mat2([
            [
                Poly::from_coeffs_raw(vec![c(rat::S11) - nu, one]),
                Poly::from_coeffs_raw(vec![c(rat::S12), zero]),
            ],
            [
                Poly::from_coeffs_raw(vec![c(rat::S21), zero]),
                Poly::from_coeffs_raw(vec![c(rat::S22) - nu, one]),
            ],
        ]),
        ModelKind::Trigonometric => {
            let half = Complex::new(R::of(0.5), R::zero());
            Mat2([
                [
                    Poly::from_coeffs_raw(vec![
                        nu * (c(trig::S01) + half * c(trig::S11)),
                        half * c(trig::S11) - c(trig::S01),
                    ]),
                    Poly::from_coeffs_raw(vec![zero, c(trig::S21)]),
                ],
                [
                    Poly::from_coeffs_raw(vec![nu * c(trig::S12), zero]),
                    Poly::from_coeffs_raw(vec![
                        nu * (c(trig::S02) + half * c(trig::S22)),
                        half * c(trig::S22) - c(trig::S02),
                    ]),
                ],
            ])
        }
    }
}

/// One-site Lax matrix as rational functions of `u`, over the single-site
/// convention denominator: `(nu - u)` rational, `(u - nu)` trigonometric.
pub fn site_lax<R: Real>(spec: &ChainSpec<R>, site: usize, xi: &PhasePoint<R>) -> LaxMatrix<R> {
    let mut num = site_numerator_poly(spec, site, xi);
    let nu = spec.poles()[site];
    let one = Complex::new(R::one(), R::zero());
    // The raw site numerator is over (u - nu) rational / (nu - u)
    // trigonometric, the opposite of each convention, so flip both.
    let den = match spec.model() {
        ModelKind::Rational => Poly::from_coeffs_raw(vec![nu, -one]),
        ModelKind::Trigonometric => Poly::from_coeffs_raw(vec![-nu, one]),
    };
    let neg = -one;
    for row in num.0.iter_mut() {
        for p in row.iter_mut() {
            *p = p.scale(&neg);
        }
    }
    LaxMatrix { num: num.0, den }
}

/// Chain Lax matrix `L(u) = L^(1) ... L^(N) C` over the common denominator.
pub fn chain_lax<R: Real>(spec: &ChainSpec<R>, xi: &PhasePoint<R>) -> LaxMatrix<R> {
    let mut num = Mat2::<Poly<Complex<R>>>::identity();
    for site in 0..spec.sites() {
        num = num.mul(&site_numerator_poly(spec, site, xi));
    }
    let tw = spec.twist();
    let twp = Mat2([
        [Poly::constant(tw.entry(0, 0)), Poly::constant(tw.entry(0, 1))],
        [Poly::constant(tw.entry(1, 0)), Poly::constant(tw.entry(1, 1))],
    ]);
    num = num.mul(&twp);
    if spec.sites() % 2 == 1 {
        let neg = Complex::new(-R::one(), R::zero());
        for row in num.0.iter_mut() {
            for p in row.iter_mut() {
                *p = p.scale(&neg);
            }
        }
    }
    LaxMatrix { num: num.0, den: denominator_poly(spec) }
}

/// Untwisted chain product over the same denominator convention.
pub fn chain_lax_untwisted<R: Real>(spec: &ChainSpec<R>, xi: &PhasePoint<R>) -> LaxMatrix<R> {
    let plain = ChainSpec::new(spec.model(), spec.poles().to_vec(), TwistMatrix::identity())
        .expect("same poles remain valid");
    chain_lax(&plain, xi)
}

/// Lax entry value L_ij(u) as an observable of the phase point.
pub struct LaxEntryObs<'a, R: Real> {
    pub spec: &'a ChainSpec<R>,
    pub u: Complex<R>,
    pub i: usize,
    pub j: usize,
    pub twisted: bool,
}

impl<'a, R: Real> Observable<R> for LaxEntryObs<'a, R> {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T {
        let num = chain_numerator_at(self.spec, coords, self.u, self.twisted);
        let den: T = denominator_at(self.spec, self.u);
        num.0[self.i][self.j].clone() / den
    }
}

// ---------------------------------------------------------------------------
// Integrals of motion
// ---------------------------------------------------------------------------

/// Generating function of the integrals plus its extracted coefficients.
#[derive(Clone, Debug)]
pub struct Integrals<R: Real> {
    /// tr L(u) as a rational function.
    pub iu: RationalFn<Complex<R>>,
    /// Separation polynomial: the trace numerator over the convention
    /// denominator; trigonometric chains carry the extra 2^N normalization.
    /// Stored positionally with length N+1 (no trimming).
    pub sep_poly: Poly<Complex<R>>,
    /// Paper-ordered coefficient list: rational `[I_1..I_N]` (the leading
    /// coefficient is `(-1)^N tr C`), trigonometric `[I_0..I_N]`.
    pub coeffs: Vec<Complex<R>>,
    is_trig: bool,
}

impl<R: Real> Integrals<R> {
    fn new(
        iu: RationalFn<Complex<R>>,
        sep_poly: Poly<Complex<R>>,
        coeffs: Vec<Complex<R>>,
        is_trig: bool,
    ) -> Self {
        Integrals { iu, sep_poly, coeffs, is_trig }
    }

    /// Number of independent flow Hamiltonians (k = 1..N in both models).
    pub fn flow_count(&self) -> usize {
        self.coeffs.len().saturating_sub(if self.is_trig { 1 } else { 0 })
    }

    /// Value of the flow Hamiltonian I_k, k = 1..N.
    pub fn flow_hamiltonian_value(&self, k: usize) -> Complex<R> {
        debug_assert!(k >= 1);
        if self.is_trig {
            self.coeffs[k]
        } else {
            self.coeffs[k - 1]
        }
    }
}

pub fn integrals<R: Real>(spec: &ChainSpec<R>, xi: &PhasePoint<R>) -> Integrals<R> {
    let lax = chain_lax(spec, xi);
    let iu = lax.trace_fn();
    let n = spec.sites();
    let mut num = iu.num.coeffs().to_vec();
    num.resize(n + 1, Complex::new(R::zero(), R::zero()));
    match spec.model() {
        ModelKind::Rational => {
            // coeffs[k-1] = I_k multiplies u^{N-k}
            let coeffs = (1..=n).map(|k| num[n - k]).collect();
            Integrals::new(
                iu,
                Poly::from_coeffs_raw(num),
                coeffs,
                false,
            )
        }
        ModelKind::Trigonometric => {
            let scale = Complex::new(R::of(2f64.powi(n as i32)), R::zero());
            let scaled: Vec<Complex<R>> = num.iter().map(|c| c * scale).collect();
            let coeffs = (0..=n).map(|k| scaled[n - k]).collect();
            Integrals::new(
                iu,
                Poly::from_coeffs_raw(scaled),
                coeffs,
                true,
            )
        }
    }
}

/// Observable computing one integral coefficient generically (used for
/// brackets and Hamiltonian vector fields).
pub struct IntegralCoeffObs<'a, R: Real> {
    spec: &'a ChainSpec<R>,
    /// Flow index k (1-based). For the trigonometric model k = 0 addresses
    /// the dependent coefficient I_0.
    pub k: usize,
}

impl<'a, R: Real> IntegralCoeffObs<'a, R> {
    pub fn new(spec: &'a ChainSpec<R>, k: usize) -> Self {
        IntegralCoeffObs { spec, k }
    }
}

impl<'a, R: Real> Observable<R> for IntegralCoeffObs<'a, R> {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T {
        let spec = self.spec;
        let n = spec.sites();
        // Polynomial trace numerator over T.
        let mut m = Mat2::<Poly<T>>::identity();
        for site in 0..n {
            let nu = spec.poles()[site];
            let c = |slot: usize| coords[spec.coord_index(site, slot)].clone();
            let site_m: Mat2<Poly<T>> = match spec.model() {
                ModelKind::Rational => Mat2([
                    [
                        Poly::from_coeffs_raw(vec![
                            c(rat::S11) - T::from_complex(nu),
                            T::one(),
                        ]),
                        Poly::constant(c(rat::S12)),
                    ],
                    [
                        Poly::constant(c(rat::S21)),
                        Poly::from_coeffs_raw(vec![
                            c(rat::S22) - T::from_complex(nu),
                            T::one(),
                        ]),
                    ],
                ]),
                ModelKind::Trigonometric => {
                    let half = T::of_f64(0.5);
                    let nn = T::from_complex(nu);
                    Mat2([
                        [
                            Poly::from_coeffs_raw(vec![
                                nn.clone() * (c(trig::S01) + half.clone() * c(trig::S11)),
                                half.clone() * c(trig::S11) - c(trig::S01),
                            ]),
                            Poly::from_coeffs_raw(vec![T::zero(), c(trig::S21)]),
                        ],
                        [
                            Poly::from_coeffs_raw(vec![nn * c(trig::S12), T::zero()]),
                            Poly::from_coeffs_raw(vec![
                                T::from_complex(nu) * (c(trig::S02) + half.clone() * c(trig::S22)),
                                half * c(trig::S22) - c(trig::S02),
                            ]),
                        ],
                    ])
                }
            };
            m = m.mul(&site_m);
        }
        let tw = spec.twist();
        // trace(M · C) = M00 c00 + M01 c10 + M10 c01 + M11 c11
        let mut trace = m.0[0][0]
            .scale(&T::from_complex(tw.entry(0, 0)))
            .add(&m.0[0][1].scale(&T::from_complex(tw.entry(1, 0))))
            .add(&m.0[1][0].scale(&T::from_complex(tw.entry(0, 1))))
            .add(&m.0[1][1].scale(&T::from_complex(tw.entry(1, 1))));
        if n % 2 == 1 {
            trace = trace.scale(&(-T::one()));
        }
        let mut coeffs = trace.into_coeffs();
        coeffs.resize(n + 1, T::zero());
        let power = n - self.k; // coefficient of u^{N-k}
        let value = coeffs[power].clone();
        match spec.model() {
            ModelKind::Rational => value,
            ModelKind::Trigonometric => value * T::of_f64(2f64.powi(n as i32)),
        }
    }
}

// ---------------------------------------------------------------------------
// Casimir functions
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CasimirSetReport<R: Real> {
    /// det L(u) as a rational function.
    pub cu: RationalFn<Complex<R>>,
    /// Named per-site Casimir values.
    pub named: Vec<(String, Complex<R>)>,
}

/// Named per-site Casimir observables for the model.
pub fn casimir_observables<R: Real>(spec: &ChainSpec<R>) -> Vec<(String, crate::poisson::QuadObs<R>)> {
    use crate::poisson::QuadObs;
    let one = Complex::new(R::one(), R::zero());
    let zero = Complex::new(R::zero(), R::zero());
    let mut out = Vec::new();
    for site in 0..spec.sites() {
        match spec.model() {
            ModelKind::Rational => {
                let s11 = spec.coord_index(site, rat::S11);
                let s12 = spec.coord_index(site, rat::S12);
                let s21 = spec.coord_index(site, rat::S21);
                let s22 = spec.coord_index(site, rat::S22);
                out.push((
                    format!("c[{}]", site + 1),
                    QuadObs { cst: zero, lin: vec![(s11, one), (s22, one)], quad: vec![] },
                ));
                out.push((
                    format!("C[{}]", site + 1),
                    QuadObs {
                        cst: zero,
                        lin: vec![],
                        quad: vec![(s11, s22, one), (s12, s21, -one)],
                    },
                ));
            }
            ModelKind::Trigonometric => {
                let s01 = spec.coord_index(site, trig::S01);
                let s02 = spec.coord_index(site, trig::S02);
                let s11 = spec.coord_index(site, trig::S11);
                let s22 = spec.coord_index(site, trig::S22);
                let s12 = spec.coord_index(site, trig::S12);
                let s21 = spec.coord_index(site, trig::S21);
                let four = Complex::new(R::of(4.0), R::zero());
                let two = Complex::new(R::of(2.0), R::zero());
                out.push((
                    format!("c1[{}]", site + 1),
                    QuadObs { cst: zero, lin: vec![], quad: vec![(s01, s01, four), (s11, s11, -one)] },
                ));
                out.push((
                    format!("c2[{}]", site + 1),
                    QuadObs { cst: zero, lin: vec![], quad: vec![(s02, s02, four), (s22, s22, -one)] },
                ));
                out.push((
                    format!("C1[{}]", site + 1),
                    QuadObs {
                        cst: zero,
                        lin: vec![],
                        quad: vec![
                            (s11, s22, two),
                            (s12, s21, -four),
                            (s01, s02, -Complex::new(R::of(8.0), R::zero())),
                        ],
                    },
                ));
                // C2 = (2 S01 + S11)(2 S02 + S22)
                out.push((
                    format!("C2[{}]", site + 1),
                    QuadObs {
                        cst: zero,
                        lin: vec![],
                        quad: vec![
                            (s01, s02, four),
                            (s01, s22, two),
                            (s11, s02, two),
                            (s11, s22, one),
                        ],
                    },
                ));
                // C2' = 4 (S01 - S02)^2 - (S11 + S22)^2
                out.push((
                    format!("C2'[{}]", site + 1),
                    QuadObs {
                        cst: zero,
                        lin: vec![],
                        quad: vec![
                            (s01, s01, four),
                            (s02, s02, four),
                            (s01, s02, -Complex::new(R::of(8.0), R::zero())),
                            (s11, s11, -one),
                            (s22, s22, -one),
                            (s11, s22, -two),
                        ],
                    },
                ));
            }
        }
    }
    out
}

pub fn casimir_generating<R: Real>(spec: &ChainSpec<R>, xi: &PhasePoint<R>) -> CasimirSetReport<R> {
    let lax = chain_lax(spec, xi);
    let det = lax.num[0][0]
        .mul(&lax.num[1][1])
        .sub(&lax.num[0][1].mul(&lax.num[1][0]));
    let cu = RationalFn::new(det.trimmed(), lax.den.mul(&lax.den));
    let named = casimir_observables(spec)
        .into_iter()
        .map(|(name, obs)| {
            let v = obs.value(xi);
            (name, v)
        })
        .collect();
    CasimirSetReport { cu, named }
}

/// det(L(u) - w Id) at numeric spectral parameters.
pub fn spectral_curve<R: Real>(
    spec: &ChainSpec<R>,
    xi: &PhasePoint<R>,
    u: Complex<R>,
    w: Complex<R>,
) -> Result<Complex<R>, NumError> {
    let lax = chain_lax(spec, xi);
    let m = lax.eval(u)?;
    Ok((m.0[0][0] - w) * (m.0[1][1] - w) - m.0[0][1] * m.0[1][0])
}

// ---------------------------------------------------------------------------
// Quadratic bracket identity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SklyaninResidual<R: Real> {
    pub max_abs: R,
    pub scale: R,
}

impl<R: Real> SklyaninResidual<R> {
    pub fn relative(&self) -> R {
        self.max_abs / self.scale
    }
}

/// Compares all 16 entry brackets {L_ij(u), L_kl(v)} with the commutator
/// [r(u,v), L(u) ⊗ L(v)].
pub fn check_sklyanin_bracket<R: Real>(
    spec: &ChainSpec<R>,
    biv: &PoissonBivector<R>,
    xi: &PhasePoint<R>,
    u: Complex<R>,
    v: Complex<R>,
) -> Result<SklyaninResidual<R>, ModelError> {
    guard_uv(u, v)?;
    let lax = chain_lax(spec, xi);
    let lu = lax.eval(u)?;
    let lv = lax.eval(v)?;
    let r = rmatrix(spec);
    let rm = r.matrix4(u, v)?;

    // kron(L(u), L(v)) with rows (i,k), cols (j,l)
    let mut kron = [[Complex::new(R::zero(), R::zero()); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    kron[2 * i + k][2 * j + l] = lu.0[i][j] * lv.0[k][l];
                }
            }
        }
    }
    let mut rhs = [[Complex::new(R::zero(), R::zero()); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = Complex::new(R::zero(), R::zero());
            for k in 0..4 {
                acc = acc + rm[i][k] * kron[k][j] - kron[i][k] * rm[k][j];
            }
            rhs[i][j] = acc;
        }
    }

    let mut max_abs = R::zero();
    let mut scale = R::of(1e-30);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let f = LaxEntryObs { spec, u, i, j, twisted: true };
                    let g = LaxEntryObs { spec, u: v, i: k, j: l, twisted: true };
                    let lhs = biv.bracket_scalar(&f, &g, &xi.coords);
                    let want = rhs[2 * i + k][2 * j + l];
                    let d = (lhs - want).norm();
                    if d > max_abs {
                        max_abs = d;
                    }
                    let s = want.norm().max(lhs.norm());
                    if s > scale {
                        scale = s;
                    }
                }
            }
        }
    }
    Ok(SklyaninResidual { max_abs, scale })
}
