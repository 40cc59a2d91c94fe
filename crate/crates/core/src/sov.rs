//! Separated variables.
//!
//! Two conventions are supported. In the reversed (non-standard) one the
//! coordinates are the zeros of A(u) = L11(u) and the momenta are values of
//! B(u) = L21(u) there; the standard one swaps the roles. When the twist has
//! c11 = 0 but c22 ≠ 0 the separating pair is redefined as (L22, L12).
//!
//! Gradients of the separated variables with respect to the phase-space
//! coordinates come from implicit differentiation of the root condition, not
//! from finite differences through the eigensolver.

use crate::chain::{ChainSpec, ModelKind};
use crate::model::{chain_lax, chain_lax_untwisted, integrals, rmatrix, LaxEntryObs, RMatrixLike};
use crate::poisson::{Observable, PhasePoint, PoissonBivector};
use crate::poly::{NumError, RationalFn};
use crate::roots::poly_roots;
use crate::scalar::Real;
use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SovError {
    #[error("both diagonal twist entries vanish; no separating pair exists")]
    DegenerateTwistRow,
    #[error("separating polynomial degenerates: {reason}")]
    DegenerateDegree { reason: String },
    #[error("clustered separated roots (min separation {min_sep:.3e})")]
    ClusteredRoots { min_sep: f64 },
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Convention {
    Standard,
    NonStandard,
}

/// Separated coordinates and momenta, sorted by (re, im) of the coordinate.
#[derive(Clone, Debug)]
pub struct SeparatedPoint<R: Real> {
    pub x: Vec<Complex<R>>,
    pub p: Vec<Complex<R>>,
    pub convention: Convention,
    /// |d/du of the separating numerator| at each root, relative to the
    /// numerator coefficient scale; small values mean ill-conditioned roots.
    pub root_condition: Vec<R>,
}

/// The separating pair with the Lax entry indices they came from.
pub struct SeparatingFns<R: Real> {
    pub a: RationalFn<Complex<R>>,
    pub b: RationalFn<Complex<R>>,
    /// (row, col) of A within L, 0-based.
    pub a_entry: (usize, usize),
    pub b_entry: (usize, usize),
}

/// Selects the separating entries for the twist: (A, B) = (L11, L21) when
/// c11 ≠ 0, else (L22, L12) when c22 ≠ 0.
pub fn separating_entries<R: Real>(
    spec: &ChainSpec<R>,
) -> Result<((usize, usize), (usize, usize)), SovError> {
    let tw = spec.twist();
    let scale = tw.scale().max(R::one());
    let tol = R::of(1e-12) * scale;
    if tw.entry(0, 0).norm() > tol {
        Ok(((0, 0), (1, 0)))
    } else if tw.entry(1, 1).norm() > tol {
        Ok(((1, 1), (0, 1)))
    } else {
        Err(SovError::DegenerateTwistRow)
    }
}

pub fn separating_functions<R: Real>(
    spec: &ChainSpec<R>,
    xi: &PhasePoint<R>,
) -> Result<SeparatingFns<R>, SovError> {
    let (a_entry, b_entry) = separating_entries(spec)?;
    let lax = chain_lax(spec, xi);
    Ok(SeparatingFns {
        a: lax.entry(a_entry.0, a_entry.1),
        b: lax.entry(b_entry.0, b_entry.1),
        a_entry,
        b_entry,
    })
}

/// Constructs the separated variables in the requested convention.
pub fn separate<R: Real>(
    spec: &ChainSpec<R>,
    xi: &PhasePoint<R>,
    convention: Convention,
) -> Result<SeparatedPoint<R>, SovError> {
    let fns = separating_functions(spec, xi)?;
    let (sep, other) = match convention {
        Convention::NonStandard => (&fns.a, &fns.b),
        Convention::Standard => (&fns.b, &fns.a),
    };
    let n = spec.sites();
    let num = sep.num.trimmed();
    match num.degree() {
        Some(d) if d == n => {}
        Some(d) => {
            return Err(SovError::DegenerateDegree {
                reason: format!("separating numerator has degree {d}, expected {n}"),
            })
        }
        None => {
            return Err(SovError::DegenerateDegree {
                reason: "separating numerator is identically zero".into(),
            })
        }
    }
    let rs = poly_roots(&num)?;
    if rs.clustered {
        return Err(SovError::ClusteredRoots {
            min_sep: rs.min_separation.to_f64().unwrap_or(0.0),
        });
    }
    // Roots that coincide with chain poles signal numerator/denominator
    // cancellation: the reduced separating function has fewer genuine roots.
    for r in &rs.roots {
        for nu in spec.poles() {
            if (r - nu).norm() < R::of(1e-6) * r.norm().max(R::one()) {
                return Err(SovError::DegenerateDegree {
                    reason: "separating root collides with a chain pole".into(),
                });
            }
        }
    }
    let dnum = num.derivative();
    let nscale = num.coeff_scale();
    let mut x = rs.roots;
    x.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    let mut p = Vec::with_capacity(n);
    let mut root_condition = Vec::with_capacity(n);
    for r in &x {
        p.push(other.eval(*r)?);
        root_condition.push(dnum.eval(r).norm() / nscale);
    }
    Ok(SeparatedPoint { x, p, convention, root_condition })
}

/// Which derived quantity a gradient is requested for.
#[derive(Copy, Clone, Debug)]
pub enum DerivedVar {
    Root(usize),
    Momentum(usize),
}

/// Gradient of a separated root or momentum with respect to the phase-space
/// coordinates, by implicit differentiation:
/// ∂x_m/∂ξ = −(∂A/∂ξ)(x_m) / A'(x_m) and
/// ∂p_m/∂ξ = (∂B/∂ξ)(x_m) + B'(x_m) ∂x_m/∂ξ (roles swapped for the
/// standard convention).
pub fn derived_observable_gradient<R: Real>(
    spec: &ChainSpec<R>,
    xi: &PhasePoint<R>,
    sep: &SeparatedPoint<R>,
    which: DerivedVar,
) -> Result<Vec<Complex<R>>, SovError> {
    let (a_entry, b_entry) = separating_entries(spec)?;
    let (sep_entry, other_entry) = match sep.convention {
        Convention::NonStandard => (a_entry, b_entry),
        Convention::Standard => (b_entry, a_entry),
    };
    let m = match which {
        DerivedVar::Root(m) | DerivedVar::Momentum(m) => m,
    };
    let xm = sep.x[m];
    let lax = chain_lax(spec, xi);
    let sep_fn = lax.entry(sep_entry.0, sep_entry.1);
    let ds = sep_fn.deriv(xm)?;
    let nscale = sep_fn.num.coeff_scale();
    let dscale = lax.den.eval(&xm).norm();
    if ds.norm() * dscale < R::of(1e-10) * nscale {
        return Err(SovError::ClusteredRoots {
            min_sep: (ds.norm() * dscale / nscale).to_f64().unwrap_or(0.0),
        });
    }
    let grad_sep = LaxEntryObs {
        spec,
        u: xm,
        i: sep_entry.0,
        j: sep_entry.1,
        twisted: true,
    }
    .gradient(xi);
    let grad_x: Vec<Complex<R>> = grad_sep.iter().map(|g| -g / ds).collect();
    match which {
        DerivedVar::Root(_) => Ok(grad_x),
        DerivedVar::Momentum(_) => {
            let other_fn = lax.entry(other_entry.0, other_entry.1);
            let db = other_fn.deriv(xm)?;
            let grad_other = LaxEntryObs {
                spec,
                u: xm,
                i: other_entry.0,
                j: other_entry.1,
                twisted: true,
            }
            .gradient(xi);
            Ok(grad_other
                .iter()
                .zip(&grad_x)
                .map(|(gb, gx)| gb + db * gx)
                .collect())
        }
    }
}

/// All pairwise brackets among the separated variables, rows/cols ordered
/// (x_1..x_N, p_1..p_N).
pub struct BracketMatrix<R: Real> {
    pub entries: Vec<Vec<Complex<R>>>,
    pub sep: SeparatedPoint<R>,
}

pub fn bracket_matrix<R: Real>(
    spec: &ChainSpec<R>,
    biv: &PoissonBivector<R>,
    xi: &PhasePoint<R>,
    convention: Convention,
) -> Result<BracketMatrix<R>, SovError> {
    let sep = separate(spec, xi, convention)?;
    let n = spec.sites();
    let mut grads = Vec::with_capacity(2 * n);
    for m in 0..n {
        grads.push(derived_observable_gradient(spec, xi, &sep, DerivedVar::Root(m))?);
    }
    for m in 0..n {
        grads.push(derived_observable_gradient(spec, xi, &sep, DerivedVar::Momentum(m))?);
    }
    let mut entries = vec![vec![Complex::new(R::zero(), R::zero()); 2 * n]; 2 * n];
    for i in 0..2 * n {
        for j in 0..2 * n {
            entries[i][j] = biv.bracket_with_grads(&grads[i], &grads[j], &xi.coords);
        }
    }
    Ok(BracketMatrix { entries, sep })
}

/// Largest deviation of the bracket matrix from the quasi-canonical pattern
/// ({x_i, p_i} = p_i rational / x_i p_i trigonometric, everything else 0),
/// together with the scale to compare against.
pub fn quasi_canonicity_residual<R: Real>(spec: &ChainSpec<R>, bm: &BracketMatrix<R>) -> (R, R) {
    let n = spec.sites();
    let expected = |i: usize| -> Complex<R> {
        match spec.model() {
            ModelKind::Rational => bm.sep.p[i],
            ModelKind::Trigonometric => bm.sep.x[i] * bm.sep.p[i],
        }
    };
    let mut scale = R::one();
    for i in 0..n {
        if expected(i).norm() > scale {
            scale = expected(i).norm();
        }
    }
    let mut worst = R::zero();
    for i in 0..2 * n {
        for j in 0..2 * n {
            let want = if i < n && j == i + n {
                expected(i)
            } else if j < n && i == j + n {
                -expected(j)
            } else {
                Complex::new(R::zero(), R::zero())
            };
            let d = (bm.entries[i][j] - want).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    (worst, scale)
}

/// Residuals of the three closed-form relations of the separating-function
/// algebra at spectral parameters (u, v).
#[derive(Clone, Debug)]
pub struct SepAlgebraResiduals<R: Real> {
    pub bb: R,
    pub ab: R,
    pub aa: R,
    pub scale: R,
}

impl<R: Real> SepAlgebraResiduals<R> {
    pub fn worst_relative(&self) -> R {
        self.bb.max(self.ab).max(self.aa) / self.scale
    }
}

pub fn check_separating_algebra<R: Real>(
    spec: &ChainSpec<R>,
    biv: &PoissonBivector<R>,
    xi: &PhasePoint<R>,
    u: Complex<R>,
    v: Complex<R>,
) -> Result<SepAlgebraResiduals<R>, SovError> {
    let (a_entry, b_entry) = separating_entries(spec)?;
    let fns = separating_functions(spec, xi)?;
    let au = fns.a.eval(u)?;
    let av = fns.a.eval(v)?;
    let bu = fns.b.eval(u)?;
    let bv = fns.b.eval(v)?;

    let obs = |entry: (usize, usize), at: Complex<R>| LaxEntryObs {
        spec,
        u: at,
        i: entry.0,
        j: entry.1,
        twisted: true,
    };

    let bb_lhs = biv.bracket(&obs(b_entry, u), &obs(b_entry, v), xi);
    let ab_lhs = biv.bracket(&obs(a_entry, u), &obs(b_entry, v), xi);
    let aa_lhs = biv.bracket(&obs(a_entry, u), &obs(a_entry, v), xi);

    // Closed forms in terms of r-matrix components. For the swapped pair
    // (A, B) = (L22, L12) the component indices mirror 1 <-> 2.
    let r = rmatrix(spec);
    let mirror = a_entry == (1, 1);
    let comp = |i: usize, j: usize, k: usize, l: usize| -> Result<Complex<R>, SovError> {
        let m = |x: usize| if mirror { 3 - x } else { x };
        r.component(m(i), m(j), m(k), m(l), u, v)
            .map_err(|e| SovError::DegenerateDegree { reason: e.to_string() })
    };
    let bb_rhs = comp(2, 1, 2, 2)? * au * bv + comp(2, 2, 2, 1)? * bu * av;
    let ab_rhs = (comp(1, 1, 2, 2)? - comp(1, 1, 1, 1)?) * au * bv + comp(1, 2, 2, 1)? * bu * av;
    let aa_rhs = comp(1, 1, 1, 2)? * au * bv + comp(1, 2, 1, 1)? * bu * av;

    let scale = [au * bv, bu * av, ab_lhs, bb_lhs, aa_lhs]
        .iter()
        .map(|z| z.norm())
        .fold(R::of(1e-30), |a, b| if b > a { b } else { a });
    Ok(SepAlgebraResiduals {
        bb: (bb_lhs - bb_rhs).norm(),
        ab: (ab_lhs - ab_rhs).norm(),
        aa: (aa_lhs - aa_rhs).norm(),
        scale,
    })
}

/// Per-root residuals of the equations of separation, with the scale used
/// for pass/fail normalization.
#[derive(Clone, Debug)]
pub struct SeparationReport<R: Real> {
    pub residuals: Vec<Complex<R>>,
    pub scale: R,
    pub sep: SeparatedPoint<R>,
}

impl<R: Real> SeparationReport<R> {
    pub fn worst_relative(&self) -> R {
        self.residuals
            .iter()
            .map(|r| r.norm())
            .fold(R::zero(), |a, b| if b > a { b } else { a })
            / self.scale
    }
}

pub fn separation_residual<R: Real>(
    spec: &ChainSpec<R>,
    xi: &PhasePoint<R>,
    convention: Convention,
) -> Result<SeparationReport<R>, SovError> {
    let sep = separate(spec, xi, convention)?;
    let ints = integrals(spec, xi);
    let tw = spec.twist();
    let mut residuals = Vec::with_capacity(sep.x.len());
    let mut scale = R::of(1e-30);
    match convention {
        Convention::NonStandard => match spec.model() {
            ModelKind::Rational => {
                // c12 p_i − c11 I(x_i); mirrored twist entries when the
                // swapped pair is in use.
                let (ca, cb) = if separating_entries(spec)? == ((0, 0), (1, 0)) {
                    (tw.entry(0, 0), tw.entry(0, 1))
                } else {
                    (tw.entry(1, 1), tw.entry(1, 0))
                };
                for (x, p) in sep.x.iter().zip(&sep.p) {
                    let iu = ints.iu.eval(*x)?;
                    residuals.push(cb * p - ca * iu);
                    let s = (ca * iu).norm().max((cb * p).norm());
                    if s > scale {
                        scale = s;
                    }
                }
            }
            ModelKind::Trigonometric => {
                let n = spec.sites();
                for x in &sep.x {
                    let iu = ints.iu.eval(*x)?;
                    residuals.push(iu);
                    // Triangle-bound scale of the separation polynomial value.
                    let mut s = R::zero();
                    for (k, c) in ints.coeffs.iter().enumerate() {
                        s = s + c.norm() * x.norm().powi((n - k) as i32);
                    }
                    let den: Complex<R> = crate::model::denominator_at(spec, *x);
                    let s = s / den.norm() / R::of(2f64.powi(n as i32));
                    if s > scale {
                        scale = s;
                    }
                }
            }
        },
        Convention::Standard => {
            // Equation of separation = spectral curve det(L(x_i) − p_i Id).
            let lax = chain_lax(spec, xi);
            for (x, p) in sep.x.iter().zip(&sep.p) {
                let m = lax.eval(*x)?;
                let det = (m.0[0][0] - p) * (m.0[1][1] - p) - m.0[0][1] * m.0[1][0];
                residuals.push(det);
                let s = (p * p).norm().max((p * m.trace()).norm()).max(m.det().norm());
                if s > scale {
                    scale = s;
                }
            }
        }
    }
    Ok(SeparationReport { residuals, scale, sep })
}

/// Relative coefficient residual of the chain identity
/// `I(u) − (c12/c11) B(u) − A(u) − (det C / c11) Ltilde22(u) ≡ 0`
/// (rational model, c11 ≠ 0), where Ltilde is the untwisted product.
pub fn iu_identity_residual<R: Real>(spec: &ChainSpec<R>, xi: &PhasePoint<R>) -> R {
    let tw = spec.twist();
    let c11 = tw.entry(0, 0);
    let c12 = tw.entry(0, 1);
    let lax = chain_lax(spec, xi);
    let untw = chain_lax_untwisted(spec, xi);
    let inum = lax.num[0][0].add(&lax.num[1][1]);
    let combo = inum
        .sub(&lax.num[1][0].scale(&(c12 / c11)))
        .sub(&lax.num[0][0])
        .sub(&untw.num[1][1].scale(&(tw.det() / c11)));
    let scale = inum
        .coeff_scale()
        .max(lax.num[1][0].coeff_scale())
        .max(lax.num[0][0].coeff_scale())
        .max(untw.num[1][1].coeff_scale())
        .max(R::of(1e-30));
    combo.coeff_scale() / scale
}

/// Options for rejection sampling of generic phase points.
#[derive(Clone, Debug)]
pub struct SampleOpts {
    pub convention: Convention,
    /// Reject points where any |p_i| falls below this (log-based angle
    /// variables need momenta away from zero).
    pub min_momentum: f64,
    /// Reject points with separated roots larger than this.
    pub max_root: f64,
    pub max_tries: usize,
}

impl Default for SampleOpts {
    fn default() -> Self {
        SampleOpts {
            convention: Convention::NonStandard,
            min_momentum: 1e-3,
            max_root: 50.0,
            max_tries: 2000,
        }
    }
}

/// Samples a phase point on which `separate` succeeds with well-conditioned
/// roots; genericity by rejection.
pub fn sample_generic<R: Real, G: Rng>(
    spec: &ChainSpec<R>,
    rng: &mut G,
    opts: &SampleOpts,
) -> (PhasePoint<R>, SeparatedPoint<R>) {
    for _ in 0..opts.max_tries {
        let xi = crate::poisson::sample_phase_point(spec, rng);
        if let Ok(sep) = separate(spec, &xi, opts.convention) {
            let p_ok = sep.p.iter().all(|p| p.norm() > R::of(opts.min_momentum));
            let x_ok = sep.x.iter().all(|x| x.norm() < R::of(opts.max_root));
            let cond_ok = sep.root_condition.iter().all(|c| *c > R::of(1e-6));
            if p_ok && x_ok && cond_ok {
                return (xi, sep);
            }
        }
    }
    panic!("failed to sample a generic phase point in {} tries", opts.max_tries);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TwistMatrix;
    use crate::model::IntegralCoeffObs;
    use crate::poisson::build_bivector;
    use crate::scalar::cplx;
    use rand_xoshiro::rand_core::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        cplx::<f64>(re, im)
    }

    fn rat_spec(n: usize, twist: TwistMatrix<f64>) -> ChainSpec<f64> {
        let poles = (0..n).map(|k| c(1.0 - 2.0 * k as f64, 0.0)).collect();
        ChainSpec::new(ModelKind::Rational, poles, twist).unwrap()
    }

    fn trig_spec(n: usize, c11: C, c22: C) -> ChainSpec<f64> {
        let poles = (0..n).map(|k| c(1.0 + 0.8 * k as f64, 0.15)).collect();
        ChainSpec::new(ModelKind::Trigonometric, poles, TwistMatrix::diagonal(c11, c22)).unwrap()
    }

    fn special_rat_n2() -> ChainSpec<f64> {
        ChainSpec::new(
            ModelKind::Rational,
            vec![c(1.0, 0.0), c(-1.0, 0.0)],
            TwistMatrix::diagonal(c(1.0, 0.0), c(0.0, 0.0)),
        )
        .unwrap()
    }

    fn general_degenerate_twist() -> TwistMatrix<f64> {
        TwistMatrix::new([[c(1.0, 0.0), c(2.0, 0.0)], [c(0.5, 0.0), c(1.0, 0.0)]])
    }

    #[test]
    fn roots_of_a_match_separation_polynomial() {
        // c12 = c22 = 0: the zeros of A solve c11 x^2 + I1 x + I2 = 0.
        let spec = special_rat_n2();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(51);
        let (xi, sep) = sample_generic(&spec, &mut rng, &SampleOpts::default());
        let ints = integrals(&spec, &xi);
        for x in &sep.x {
            let v = c(1.0, 0.0) * x * x + ints.coeffs[0] * x + ints.coeffs[1];
            assert!(v.norm() < 1e-10, "sep poly residual {:e}", v.norm());
        }
    }

    #[test]
    fn zero_spins_degenerate() {
        let spec = special_rat_n2();
        let xi = PhasePoint::new(vec![c(0.0, 0.0); spec.coord_count()]);
        let err = separate(&spec, &xi, Convention::NonStandard).unwrap_err();
        assert!(matches!(err, SovError::DegenerateDegree { .. }));
    }

    #[test]
    fn antidiagonal_twist_has_no_separating_pair() {
        let tw = TwistMatrix::new([[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]);
        let spec = rat_spec(2, tw);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(52);
        let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
        assert!(matches!(
            separating_functions(&spec, &xi),
            Err(SovError::DegenerateTwistRow)
        ));
    }

    #[test]
    fn separated_pair_satisfies_definitions() {
        let spec = rat_spec(3, general_degenerate_twist());
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(53);
        for _ in 0..10 {
            let (xi, sep) = sample_generic(&spec, &mut rng, &SampleOpts::default());
            let fns = separating_functions(&spec, &xi).unwrap();
            for (x, p) in sep.x.iter().zip(&sep.p) {
                let a = fns.a.eval(*x).unwrap();
                let ascale = fns.a.num.coeff_scale() / fns.a.den.eval(x).norm();
                assert!(a.norm() <= 1e-9 * ascale.max(1.0));
                let b = fns.b.eval(*x).unwrap();
                assert!((b - p).norm() <= 1e-12 * (1.0 + p.norm()));
            }
        }
    }

    #[test]
    fn implicit_gradients_match_rerooting() {
        let spec = rat_spec(2, general_degenerate_twist());
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(54);
        let (xi, sep) = sample_generic(&spec, &mut rng, &SampleOpts::default());
        let eps = 1e-6;
        for m in 0..spec.sites() {
            let gx = derived_observable_gradient(&spec, &xi, &sep, DerivedVar::Root(m)).unwrap();
            let gp =
                derived_observable_gradient(&spec, &xi, &sep, DerivedVar::Momentum(m)).unwrap();
            for a in 0..spec.coord_count() {
                let mut bumped = xi.clone();
                bumped.coords[a] = bumped.coords[a] + c(eps, 0.0);
                let sep2 = separate(&spec, &bumped, sep.convention).unwrap();
                // Continuity matching: nearest root to the unperturbed one.
                let (mm, _) = sep2
                    .x
                    .iter()
                    .enumerate()
                    .min_by(|(_, u), (_, v)| {
                        (*u - sep.x[m])
                            .norm()
                            .partial_cmp(&(*v - sep.x[m]).norm())
                            .unwrap()
                    })
                    .unwrap();
                let fd_x = (sep2.x[mm] - sep.x[m]) / c(eps, 0.0);
                assert!(
                    (fd_x - gx[a]).norm() <= 2e-5 * (1.0 + gx[a].norm()),
                    "root grad coord {a}: fd {:?} vs {:?}",
                    fd_x,
                    gx[a]
                );
                let fd_p = (sep2.p[mm] - sep.p[m]) / c(eps, 0.0);
                assert!(
                    (fd_p - gp[a]).norm() <= 1e-4 * (1.0 + gp[a].norm()),
                    "momentum grad coord {a}: fd {:?} vs {:?}",
                    fd_p,
                    gp[a]
                );
            }
        }
    }

    #[test]
    fn casimir_flows_do_not_move_roots() {
        let spec = special_rat_n2();
        let biv = build_bivector(&spec);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(55);
        let (xi, sep) = sample_generic(&spec, &mut rng, &SampleOpts::default());
        for (_, cas) in crate::model::casimir_observables(&spec) {
            let field = biv.hamiltonian_vector_field(&cas, &xi);
            for m in 0..spec.sites() {
                let gx = derived_observable_gradient(&spec, &xi, &sep, DerivedVar::Root(m)).unwrap();
                let dot: C = gx.iter().zip(&field).map(|(a, b)| a * b).sum();
                assert!(dot.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn quasi_canonical_pattern_rational() {
        let twists = [general_degenerate_twist(), TwistMatrix::identity()];
        for tw in twists {
            for n in [2usize, 3] {
                let spec = rat_spec(n, tw.clone());
                let biv = build_bivector(&spec);
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(56);
                for _ in 0..5 {
                    let (xi, _) = sample_generic(&spec, &mut rng, &SampleOpts::default());
                    let bm = bracket_matrix(&spec, &biv, &xi, Convention::NonStandard).unwrap();
                    let (worst, scale) = quasi_canonicity_residual(&spec, &bm);
                    assert!(
                        worst <= 1e-8 * scale,
                        "N={n}: worst {:.3e} scale {:.3e}",
                        worst,
                        scale
                    );
                }
            }
        }
    }

    #[test]
    fn quasi_canonical_pattern_trig() {
        let spec = trig_spec(2, c(1.0, 0.0), c(0.0, 0.0));
        let biv = build_bivector(&spec);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(57);
        for _ in 0..5 {
            let (xi, _) = sample_generic(&spec, &mut rng, &SampleOpts::default());
            let bm = bracket_matrix(&spec, &biv, &xi, Convention::NonStandard).unwrap();
            let (worst, scale) = quasi_canonicity_residual(&spec, &bm);
            assert!(worst <= 1e-8 * scale, "worst {:.3e} scale {:.3e}", worst, scale);
        }
        // With a diagonal twist the lower-left numerator has degree N-1, so
        // the standard convention cannot supply N roots.
        let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
        assert!(matches!(
            separate(&spec, &xi, Convention::Standard),
            Err(SovError::DegenerateDegree { .. })
        ));
    }

    #[test]
    fn both_conventions_quasi_canonical_when_admissible() {
        // All twist entries nonzero: the standard pair has full degree too.
        let spec = rat_spec(2, general_degenerate_twist());
        let biv = build_bivector(&spec);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(64);
        for conv in [Convention::NonStandard, Convention::Standard] {
            for _ in 0..5 {
                let opts = SampleOpts { convention: conv, ..SampleOpts::default() };
                let (xi, _) = sample_generic(&spec, &mut rng, &opts);
                let bm = bracket_matrix(&spec, &biv, &xi, conv).unwrap();
                let (worst, scale) = quasi_canonicity_residual(&spec, &bm);
                assert!(
                    worst <= 1e-8 * scale,
                    "{conv:?}: worst {:.3e} scale {:.3e}",
                    worst,
                    scale
                );
            }
        }
    }

    #[test]
    fn separating_algebra_closed_forms() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(58);
        let spec = rat_spec(3, general_degenerate_twist());
        let biv = build_bivector(&spec);
        for _ in 0..10 {
            let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
            let u = c(rng.gen_range(2.0..4.0), rng.gen_range(0.3..1.3));
            let v = c(rng.gen_range(-4.0..-2.0), rng.gen_range(0.3..1.3));
            let res = check_separating_algebra(&spec, &biv, &xi, u, v).unwrap();
            assert!(res.worst_relative() < 1e-9, "rel {:.3e}", res.worst_relative());
        }
        let spec = trig_spec(2, c(1.0, 0.0), c(0.35, 0.0));
        let biv = build_bivector(&spec);
        for _ in 0..10 {
            let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
            let u = c(rng.gen_range(2.5..4.0), rng.gen_range(0.8..1.6));
            let v = c(rng.gen_range(-4.0..-2.5), rng.gen_range(0.8..1.6));
            let res = check_separating_algebra(&spec, &biv, &xi, u, v).unwrap();
            assert!(res.worst_relative() < 1e-9, "rel {:.3e}", res.worst_relative());
        }
    }

    #[test]
    fn separating_algebra_collision_limit() {
        // At v = u + h the bracket {A(u), B(v)} approaches the Leibniz form
        // A(v) B'(v) − A'(v) B(v) built from the closed-form limit.
        let spec = rat_spec(2, general_degenerate_twist());
        let biv = build_bivector(&spec);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(59);
        let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
        let fns = separating_functions(&spec, &xi).unwrap();
        let u = c(2.7, 0.9);
        let h = 1e-4;
        let v = u + c(h, 0.0);
        let ab = biv.bracket(
            &LaxEntryObs { spec: &spec, u, i: 0, j: 0, twisted: true },
            &LaxEntryObs { spec: &spec, u: v, i: 1, j: 0, twisted: true },
            &xi,
        );
        let lim = fns.a.eval(v).unwrap() * fns.b.deriv(v).unwrap()
            - fns.a.deriv(v).unwrap() * fns.b.eval(v).unwrap();
        let scale = ab.norm().max(lim.norm()).max(1e-30);
        assert!((ab - lim).norm() <= 1e-3 * scale, "h-limit mismatch");
    }

    #[test]
    fn separation_residuals_iff_degenerate() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(60);
        // det C = 0, c12 ≠ 0: residuals vanish.
        let spec = rat_spec(2, general_degenerate_twist());
        for _ in 0..20 {
            let (xi, _) = sample_generic(&spec, &mut rng, &SampleOpts::default());
            let rep = separation_residual(&spec, &xi, Convention::NonStandard).unwrap();
            assert!(rep.worst_relative() < 1e-9, "rel {:.3e}", rep.worst_relative());
        }
        // C = Id: separability fails at generic points.
        let spec = rat_spec(2, TwistMatrix::identity());
        let mut fails = 0;
        for _ in 0..100 {
            let (xi, _) = sample_generic(&spec, &mut rng, &SampleOpts::default());
            let rep = separation_residual(&spec, &xi, Convention::NonStandard).unwrap();
            if rep.worst_relative() > 1e-3 {
                fails += 1;
            }
        }
        assert!(fails >= 99, "only {fails}/100 generic points broke separability");
    }

    #[test]
    fn trig_separation_residual_and_action_property() {
        let spec = trig_spec(2, c(1.0, 0.0), c(0.0, 0.0));
        let biv = build_bivector(&spec);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(61);
        for _ in 0..10 {
            let (xi, sep) = sample_generic(&spec, &mut rng, &SampleOpts::default());
            let rep = separation_residual(&spec, &xi, Convention::NonStandard).unwrap();
            assert!(rep.worst_relative() < 1e-10, "rel {:.3e}", rep.worst_relative());
            // Action variables: {I_k, x_i} = 0.
            for k in 1..=spec.sites() {
                let ik = IntegralCoeffObs::new(&spec, k);
                let gi = ik.gradient(&xi);
                for m in 0..spec.sites() {
                    let gx =
                        derived_observable_gradient(&spec, &xi, &sep, DerivedVar::Root(m)).unwrap();
                    let v = biv.bracket_with_grads(&gi, &gx, &xi.coords);
                    let scale = sep.x[m].norm().max(1.0);
                    assert!(v.norm() < 1e-9 * scale, "{{I{k}, x{m}}} = {:e}", v.norm());
                }
            }
        }
    }

    #[test]
    fn standard_vs_nonstandard_separation_relations() {
        // det C = 0 with all entries nonzero: the standard pair obeys
        // I(x) = p, the reversed pair obeys c12 p = c11 I(x).
        let spec = rat_spec(2, general_degenerate_twist());
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(62);
        for _ in 0..10 {
            let opts = SampleOpts { convention: Convention::Standard, ..SampleOpts::default() };
            let (xi, sep) = sample_generic(&spec, &mut rng, &opts);
            let ints = integrals(&spec, &xi);
            for (x, p) in sep.x.iter().zip(&sep.p) {
                let iu = ints.iu.eval(*x).unwrap();
                let scale = iu.norm().max(p.norm()).max(1e-30);
                assert!((iu - p).norm() <= 1e-8 * scale, "I(x)=p residual");
            }
            let rep = separation_residual(&spec, &xi, Convention::NonStandard).unwrap();
            assert!(rep.worst_relative() < 1e-8);
        }
    }

    #[test]
    fn separating_function_leading_coefficients() {
        // Rational N=2: A-numerator has degree 2 with leading (-1)^N c11.
        let c11 = c(0.8, 0.3);
        let tw = TwistMatrix::diagonal(c11, c(0.0, 0.0));
        let spec = ChainSpec::new(
            ModelKind::Rational,
            vec![c(1.0, 0.0), c(-1.0, 0.0)],
            tw,
        )
        .unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(65);
        let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
        let fns = separating_functions(&spec, &xi).unwrap();
        let num = fns.a.num.trimmed();
        assert_eq!(num.degree(), Some(2));
        assert!((num.leading().unwrap() - c11).norm() < 1e-12);

        // Trigonometric: 2^N times the leading coefficient of A's numerator
        // equals c11 prod_k (2 S01^k - S11^k).
        let spec = trig_spec(2, c11, c(0.0, 0.0));
        let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
        let fns = separating_functions(&spec, &xi).unwrap();
        let mut coeffs = fns.a.num.coeffs().to_vec();
        coeffs.resize(3, c(0.0, 0.0));
        let a0 = coeffs[2] * c(4.0, 0.0);
        let want = c11
            * (xi.coords[spec.coord_index(0, crate::chain::trig::S01)] * c(2.0, 0.0)
                - xi.coords[spec.coord_index(0, crate::chain::trig::S11)])
            * (xi.coords[spec.coord_index(1, crate::chain::trig::S01)] * c(2.0, 0.0)
                - xi.coords[spec.coord_index(1, crate::chain::trig::S11)]);
        assert!((a0 - want).norm() <= 1e-12 * (1.0 + want.norm()), "A0 mismatch");
    }

    #[test]
    fn iu_identity_holds() {
        let tw = TwistMatrix::new([[c(1.1, 0.2), c(0.4, -0.1)], [c(0.3, 0.25), c(0.8, 0.05)]]);
        let spec = rat_spec(3, tw);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(63);
        for _ in 0..10 {
            let xi = crate::poisson::sample_phase_point(&spec, &mut rng);
            assert!(iu_identity_residual(&spec, &xi) < 1e-10);
        }
    }
}
