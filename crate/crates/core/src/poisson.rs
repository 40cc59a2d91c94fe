//! Phase space, Poisson bivector, and bracket evaluation.
//!
//! The bivector entries are degree ≤ 2 polynomials in the coordinates. A
//! bracket {f, g} = ∇f · Π · ∇g is evaluated with gradients obtained by
//! dual-number seeding, so any [`Observable`] gets exact derivatives.

use crate::chain::{trig, ChainSpec, ModelKind};
use crate::dual::{seed_coords, Dual};
use crate::scalar::{Real, Scalar};
use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;

/// Flat vector of complex dynamical coordinates, laid out per site.
#[derive(Clone, Debug)]
pub struct PhasePoint<R: Real> {
    pub coords: Vec<Complex<R>>,
}

impl<R: Real> PhasePoint<R> {
    pub fn new(coords: Vec<Complex<R>>) -> Self {
        PhasePoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Samples every coordinate uniformly from the complex square [-1,1]².
pub fn sample_phase_point<R: Real, G: Rng>(spec: &ChainSpec<R>, rng: &mut G) -> PhasePoint<R> {
    let coords = (0..spec.coord_count())
        .map(|_| {
            Complex::new(
                R::of(rng.gen_range(-1.0..1.0)),
                R::of(rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    PhasePoint::new(coords)
}

/// A differentiable function of the phase point: one generic evaluation body
/// serves plain values and dual numbers alike.
pub trait Observable<R: Real> {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T;

    fn value(&self, point: &PhasePoint<R>) -> Complex<R> {
        self.eval(&point.coords)
    }

    /// Gradient with respect to the full coordinate basis.
    fn gradient(&self, point: &PhasePoint<R>) -> Vec<Complex<R>> {
        let seeded = seed_coords(&point.coords);
        self.eval(&seeded).grad_padded(point.dim())
    }
}

/// Coordinate function ξ ↦ ξ_a.
#[derive(Copy, Clone, Debug)]
pub struct CoordFn(pub usize);

impl<R: Real> Observable<R> for CoordFn {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T {
        coords[self.0].clone()
    }
}

/// Constant observable.
#[derive(Copy, Clone, Debug)]
pub struct ConstFn<R: Real>(pub Complex<R>);

impl<R: Real> Observable<R> for ConstFn<R> {
    fn eval<T: Scalar<R = R>>(&self, _coords: &[T]) -> T {
        T::from_complex(self.0)
    }
}

/// Affine-quadratic combination of coordinates; the workhorse for random
/// test observables and for named Casimirs.
#[derive(Clone, Debug)]
pub struct QuadObs<R: Real> {
    pub cst: Complex<R>,
    pub lin: Vec<(usize, Complex<R>)>,
    pub quad: Vec<(usize, usize, Complex<R>)>,
}

impl<R: Real> QuadObs<R> {
    pub fn random<G: Rng>(dim: usize, rng: &mut G) -> Self {
        let pick = |rng: &mut G| Complex::new(R::of(rng.gen_range(-1.0..1.0)), R::of(rng.gen_range(-1.0..1.0)));
        let lin = (0..3)
            .map(|_| (rng.gen_range(0..dim), pick(rng)))
            .collect();
        let quad = (0..3)
            .map(|_| (rng.gen_range(0..dim), rng.gen_range(0..dim), pick(rng)))
            .collect();
        QuadObs { cst: pick(rng), lin, quad }
    }
}

impl<R: Real> Observable<R> for QuadObs<R> {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T {
        let mut acc = T::from_complex(self.cst);
        for (a, c) in &self.lin {
            acc = acc + T::from_complex(*c) * coords[*a].clone();
        }
        for (a, b, c) in &self.quad {
            acc = acc + T::from_complex(*c) * coords[*a].clone() * coords[*b].clone();
        }
        acc
    }
}

/// Pointwise product of two observables.
pub struct ProductObs<'a, F, G>(pub &'a F, pub &'a G);

impl<'a, R: Real, F: Observable<R>, G: Observable<R>> Observable<R> for ProductObs<'a, F, G> {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T {
        self.0.eval(coords) * self.1.eval(coords)
    }
}

/// One term of a bivector entry: coeff · ξ_a · ξ_b with optional factors.
#[derive(Clone, Debug)]
struct BivTerm<R: Real> {
    coeff: Complex<R>,
    factors: [Option<usize>; 2],
}

/// Antisymmetric matrix of coordinate polynomials defining
/// {f, g} = ∇f · Π · ∇g. Entries are stored for index pairs a < b only.
#[derive(Clone, Debug)]
pub struct PoissonBivector<R: Real> {
    dim: usize,
    entries: Vec<((usize, usize), Vec<BivTerm<R>>)>,
}

impl<R: Real> PoissonBivector<R> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn push_term(
        table: &mut Vec<((usize, usize), Vec<BivTerm<R>>)>,
        a: usize,
        b: usize,
        coeff: Complex<R>,
        factors: [Option<usize>; 2],
    ) {
        debug_assert!(a < b);
        if coeff.is_zero() {
            return;
        }
        if let Some((_, terms)) = table.iter_mut().find(|((x, y), _)| *x == a && *y == b) {
            terms.push(BivTerm { coeff, factors });
        } else {
            table.push(((a, b), vec![BivTerm { coeff, factors }]));
        }
    }

    /// Evaluates entry Π_ab at the given coordinates (any scalar).
    pub fn entry<T: Scalar<R = R>>(&self, a: usize, b: usize, coords: &[T]) -> T {
        if a == b {
            return T::zero();
        }
        let (lo, hi, flip) = if a < b { (a, b, false) } else { (b, a, true) };
        let mut acc = T::zero();
        if let Some((_, terms)) = self.entries.iter().find(|((x, y), _)| *x == lo && *y == hi) {
            for t in terms {
                let mut v = T::from_complex(t.coeff);
                for f in t.factors.iter().flatten() {
                    v = v * coords[*f].clone();
                }
                acc = acc + v;
            }
        }
        if flip {
            -acc
        } else {
            acc
        }
    }

    /// {f, g}(ξ) from precomputed gradients.
    pub fn bracket_with_grads<T: Scalar<R = R>>(
        &self,
        grad_f: &[T],
        grad_g: &[T],
        coords: &[T],
    ) -> T {
        let mut acc = T::zero();
        for ((a, b), _) in &self.entries {
            let pi = self.entry(*a, *b, coords);
            acc = acc
                + pi.clone()
                    * (grad_f[*a].clone() * grad_g[*b].clone()
                        - grad_f[*b].clone() * grad_g[*a].clone());
        }
        acc
    }

    /// {f, g}(ξ) with gradients from dual-number seeding. Generic in the
    /// scalar, so brackets of brackets (Jacobi) evaluate exactly through
    /// nested duals.
    pub fn bracket_scalar<T, F, G>(&self, f: &F, g: &G, coords: &[T]) -> T
    where
        T: Scalar<R = R>,
        F: Observable<R>,
        G: Observable<R>,
    {
        let seeded = seed_coords(coords);
        let fv: Dual<T> = f.eval(&seeded);
        let gv: Dual<T> = g.eval(&seeded);
        let gf = fv.grad_padded(coords.len());
        let gg = gv.grad_padded(coords.len());
        self.bracket_with_grads(&gf, &gg, coords)
    }

    /// {f, g} at a phase point.
    pub fn bracket<F, G>(&self, f: &F, g: &G, point: &PhasePoint<R>) -> Complex<R>
    where
        F: Observable<R>,
        G: Observable<R>,
    {
        self.bracket_scalar(f, g, &point.coords)
    }

    /// Hamiltonian vector field of `H`: component a is Σ_b Π_ab ∂_b H, so a
    /// trajectory of this field satisfies df/dt = {f, H}.
    pub fn hamiltonian_vector_field<H: Observable<R>>(
        &self,
        h: &H,
        point: &PhasePoint<R>,
    ) -> Vec<Complex<R>> {
        let grad = h.gradient(point);
        self.field_from_grad(&grad, &point.coords)
    }

    /// Field components from a precomputed gradient of the Hamiltonian.
    pub fn field_from_grad(
        &self,
        grad_h: &[Complex<R>],
        coords: &[Complex<R>],
    ) -> Vec<Complex<R>> {
        let mut field = vec![Complex::new(R::zero(), R::zero()); self.dim];
        for ((a, b), _) in &self.entries {
            let pi: Complex<R> = self.entry(*a, *b, coords);
            field[*a] = field[*a] + pi * grad_h[*b];
            field[*b] = field[*b] - pi * grad_h[*a];
        }
        field
    }
}

/// Bracket of two observables as an observable itself (for nested brackets).
pub struct BracketObs<'a, R: Real, F, G> {
    pub biv: &'a PoissonBivector<R>,
    pub f: &'a F,
    pub g: &'a G,
}

impl<'a, R: Real, F: Observable<R>, G: Observable<R>> Observable<R> for BracketObs<'a, R, F, G> {
    fn eval<T: Scalar<R = R>>(&self, coords: &[T]) -> T {
        self.biv.bracket_scalar(self.f, self.g, coords)
    }
}

/// Builds the bivector reproducing the model's coordinate bracket relations;
/// brackets between different sites vanish.
pub fn build_bivector<R: Real>(spec: &ChainSpec<R>) -> PoissonBivector<R> {
    let mut entries = Vec::new();
    let one = Complex::new(R::one(), R::zero());
    let quarter = Complex::new(R::of(0.25), R::zero());
    for site in 0..spec.sites() {
        match spec.model() {
            ModelKind::Rational => {
                // {S_ij, S_kl} = δ_kj S_il − δ_il S_kj on each site.
                let idx = |i: usize, j: usize| spec.coord_index(site, 2 * i + j);
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                let a = idx(i, j);
                                let b = idx(k, l);
                                if a >= b {
                                    continue;
                                }
                                if k == j {
                                    PoissonBivector::push_term(
                                        &mut entries,
                                        a,
                                        b,
                                        one,
                                        [Some(idx(i, l)), None],
                                    );
                                }
                                if i == l {
                                    PoissonBivector::push_term(
                                        &mut entries,
                                        a,
                                        b,
                                        -one,
                                        [Some(idx(k, j)), None],
                                    );
                                }
                            }
                        }
                    }
                }
            }
            ModelKind::Trigonometric => {
                let s01 = spec.coord_index(site, trig::S01);
                let s02 = spec.coord_index(site, trig::S02);
                let s11 = spec.coord_index(site, trig::S11);
                let s22 = spec.coord_index(site, trig::S22);
                let s12 = spec.coord_index(site, trig::S12);
                let s21 = spec.coord_index(site, trig::S21);
                let mut add = |a: usize, b: usize, c: Complex<R>, f1: usize, f2: usize| {
                    // Stored for the ordered pair; flip sign if needed.
                    if a < b {
                        PoissonBivector::push_term(&mut entries, a, b, c, [Some(f1), Some(f2)]);
                    } else {
                        PoissonBivector::push_term(&mut entries, b, a, -c, [Some(f1), Some(f2)]);
                    }
                };
                // {S01, S12} = ¼ S11 S12, {S02, S21} = ¼ S22 S21
                add(s01, s12, quarter, s11, s12);
                add(s02, s21, quarter, s22, s21);
                // {S01, S21} = −¼ S11 S21, {S02, S12} = −¼ S22 S12
                add(s01, s21, -quarter, s11, s21);
                add(s02, s12, -quarter, s22, s12);
                // {S11, S12} = S01 S12, {S22, S21} = S02 S21
                add(s11, s12, one, s01, s12);
                add(s22, s21, one, s02, s21);
                // {S11, S21} = −S01 S21, {S22, S12} = −S02 S12
                add(s11, s21, -one, s01, s21);
                add(s22, s12, -one, s02, s12);
                // {S12, S21} = S02 S11 − S01 S22
                add(s12, s21, one, s02, s11);
                add(s12, s21, -one, s01, s22);
            }
        }
    }
    PoissonBivector {
        dim: spec.coord_count(),
        entries,
    }
}
