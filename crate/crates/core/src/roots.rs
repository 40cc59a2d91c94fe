//! Polynomial root finding.
//!
//! Strategy: eigenvalues of the balanced companion matrix via shifted complex
//! QR with deflation, then two Newton refinement steps per root against the
//! original polynomial. Intended scale is degree ≤ 12; clustered roots are
//! flagged, not silently accepted, because the separation machinery requires
//! simple roots.

use crate::poly::{NumError, Poly};
use crate::scalar::Real;
use num_complex::Complex;

/// Pairwise root distance below `CLUSTER_REL · max(1, max|root|)` flags a
/// cluster.
pub const CLUSTER_REL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct RootSet<R: Real> {
    /// Roots sorted by (re, im).
    pub roots: Vec<Complex<R>>,
    /// Minimum pairwise distance between returned roots.
    pub min_separation: R,
    /// True when two roots are closer than the cluster threshold.
    pub clustered: bool,
    /// max over roots of |p(root)| / coeff_scale(p).
    pub max_rel_residual: R,
}

/// All roots of `p`, with multiplicity.
pub fn poly_roots<R: Real>(p: &Poly<Complex<R>>) -> Result<RootSet<R>, NumError> {
    let pt = p.trimmed();
    let deg = match pt.degree() {
        None => return Err(NumError::ZeroPolynomial),
        Some(0) => return Err(NumError::ConstantPolynomial),
        Some(d) => d,
    };

    let lead = *pt.coeffs().last().unwrap();
    let monic: Vec<Complex<R>> = pt.coeffs()[..deg].iter().map(|c| c / lead).collect();

    // Variable scaling u = s w conditions the companion matrix when the
    // monic coefficients are badly spread.
    let max_mag = monic
        .iter()
        .map(|c| c.norm())
        .fold(R::of(1e-300), |a, b| if b > a { b } else { a });
    let mut s = R::one();
    if max_mag > R::one() {
        // |c_{n-k}| s^{-k} ≤ 1 for the worst coefficient.
        for (i, c) in monic.iter().enumerate() {
            let k = deg - i;
            let cand = c.norm().powf(R::one() / R::of(k as f64));
            if cand > s {
                s = cand;
            }
        }
    }
    let sc = Complex::new(s, R::zero());
    let scaled: Vec<Complex<R>> = monic
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = deg - i;
            let mut f = Complex::new(R::one(), R::zero());
            for _ in 0..k {
                f = f / sc;
            }
            c * f
        })
        .collect();

    let mut roots = match deg {
        1 => vec![-monic[0]],
        2 => quadratic_roots(monic[0], monic[1]),
        _ => {
            let mut h = companion(&scaled);
            balance(&mut h, deg);
            let ws = hessenberg_eigenvalues(h, deg)?;
            ws.into_iter().map(|w| w * sc).collect()
        }
    };

    // Newton refinement against the original polynomial.
    let dp = pt.derivative();
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let v = pt.eval(r);
            let d = dp.eval(r);
            if d.norm() > R::of(1e-300) {
                let step = v / d;
                // A huge step signals an ill-conditioned (clustered) root;
                // keep the eigenvalue estimate instead.
                if step.norm() < R::of(1.0) + r.norm() {
                    *r = *r - step;
                }
            }
        }
    }

    roots.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });

    let scale = pt.coeff_scale();
    let max_rel_residual = roots
        .iter()
        .map(|r| pt.eval(r).norm() / scale)
        .fold(R::zero(), |a, b| if b > a { b } else { a });

    let root_scale = roots
        .iter()
        .map(|r| r.norm())
        .fold(R::one(), |a, b| if b > a { b } else { a });
    let mut min_separation = R::infinity();
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            let d = (roots[i] - roots[j]).norm();
            if d < min_separation {
                min_separation = d;
            }
        }
    }
    let clustered = roots.len() > 1 && min_separation < R::of(CLUSTER_REL) * root_scale;

    Ok(RootSet {
        roots,
        min_separation,
        clustered,
        max_rel_residual,
    })
}

/// Roots of `u² + b u + c` with cancellation-safe pairing.
fn quadratic_roots<R: Real>(c0: Complex<R>, c1: Complex<R>) -> Vec<Complex<R>> {
    let b = c1;
    let c = c0;
    let half = Complex::new(R::of(0.5), R::zero());
    let disc = (b * b - Complex::new(R::of(4.0), R::zero()) * c).sqrt();
    // Choose the sign that avoids cancellation in -b ∓ disc.
    let q = if (b + disc).norm() >= (b - disc).norm() {
        -(b + disc) * half
    } else {
        -(b - disc) * half
    };
    if q.norm() > R::zero() {
        vec![q, c / q]
    } else {
        // b = c = 0: double root at origin.
        vec![Complex::new(R::zero(), R::zero()); 2]
    }
}

/// Companion matrix (upper Hessenberg, column-major closure over `n`).
fn companion<R: Real>(monic_low: &[Complex<R>]) -> Vec<Complex<R>> {
    let n = monic_low.len();
    let zero = Complex::new(R::zero(), R::zero());
    let one = Complex::new(R::one(), R::zero());
    let mut h = vec![zero; n * n];
    for i in 1..n {
        h[i * n + (i - 1)] = one; // subdiagonal
    }
    for i in 0..n {
        h[i * n + (n - 1)] = -monic_low[i];
    }
    h
}

/// Parlett–Reinsch style balancing with powers of two.
fn balance<R: Real>(h: &mut [Complex<R>], n: usize) {
    let radix = R::of(2.0);
    for _ in 0..20 {
        let mut converged = true;
        for i in 0..n {
            let mut c = R::zero();
            let mut r = R::zero();
            for j in 0..n {
                if j != i {
                    c = c + h[j * n + i].norm();
                    r = r + h[i * n + j].norm();
                }
            }
            if c.is_zero() || r.is_zero() {
                continue;
            }
            let mut f = R::one();
            let s = c + r;
            let mut cc = c;
            let mut rr = r;
            while cc < rr / radix {
                cc = cc * radix;
                rr = rr / radix;
                f = f * radix;
            }
            while cc > rr * radix {
                cc = cc / radix;
                rr = rr * radix;
                f = f / radix;
            }
            if (cc + rr) < R::of(0.95) * s {
                converged = false;
                let fc = Complex::new(f, R::zero());
                for j in 0..n {
                    h[i * n + j] = h[i * n + j] / fc;
                }
                for j in 0..n {
                    h[j * n + i] = h[j * n + i] * fc;
                }
            }
        }
        if converged {
            break;
        }
    }
}

/// Eigenvalues of a complex upper Hessenberg matrix by explicitly shifted QR
/// with Givens rotations and deflation.
fn hessenberg_eigenvalues<R: Real>(
    mut h: Vec<Complex<R>>,
    n: usize,
) -> Result<Vec<Complex<R>>, NumError> {
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n; // active block is rows/cols 0..hi
    let eps = R::of(1e-15);
    let mut iter_since_deflate = 0usize;
    let max_iter = 60 * n;
    let mut total_iter = 0usize;

    while hi > 0 {
        if hi == 1 {
            eigs.push(h[0]);
            break;
        }
        // Look for a negligible subdiagonal from the bottom of the block.
        let mut lo = 0;
        for k in (1..hi).rev() {
            let sub = h[k * n + k - 1].norm();
            let local = h[(k - 1) * n + (k - 1)].norm() + h[k * n + k].norm();
            if sub <= eps * (local + R::of(1e-300)) {
                h[k * n + k - 1] = Complex::new(R::zero(), R::zero());
                lo = k;
                break;
            }
        }
        if lo == hi - 1 {
            // 1x1 deflated at the bottom.
            eigs.push(h[(hi - 1) * n + (hi - 1)]);
            hi -= 1;
            iter_since_deflate = 0;
            continue;
        }
        if hi - lo == 2 {
            // Solve trailing 2x2 block directly.
            let a = h[lo * n + lo];
            let b = h[lo * n + lo + 1];
            let c = h[(lo + 1) * n + lo];
            let d = h[(lo + 1) * n + lo + 1];
            for ev in eig2(a, b, c, d) {
                eigs.push(ev);
            }
            hi = lo;
            iter_since_deflate = 0;
            continue;
        }

        total_iter += 1;
        iter_since_deflate += 1;
        if total_iter > max_iter {
            return Err(NumError::EigenFailure);
        }

        // Wilkinson shift from the trailing 2x2 of the active block,
        // with an occasional exceptional shift to break cycles.
        let m = hi - 1;
        let shift = if iter_since_deflate % 12 == 0 {
            let mag = h[m * n + m - 1].norm() + h[m * n + m].norm();
            Complex::new(R::of(1.1) * mag, R::of(0.31) * mag)
        } else {
            let a = h[(m - 1) * n + (m - 1)];
            let b = h[(m - 1) * n + m];
            let c = h[m * n + m - 1];
            let d = h[m * n + m];
            let pair = eig2(a, b, c, d);
            if (pair[0] - d).norm() <= (pair[1] - d).norm() {
                pair[0]
            } else {
                pair[1]
            }
        };

        // Explicit shifted QR sweep on the active block [lo, hi).
        for i in lo..hi {
            h[i * n + i] = h[i * n + i] - shift;
        }
        let mut rotations = Vec::with_capacity(hi - lo - 1);
        for k in lo..(hi - 1) {
            let f = h[k * n + k];
            let g = h[(k + 1) * n + k];
            let (c, s, r) = givens(f, g);
            rotations.push((c, s));
            h[k * n + k] = r;
            h[(k + 1) * n + k] = Complex::new(R::zero(), R::zero());
            for j in (k + 1)..hi {
                let a = h[k * n + j];
                let b = h[(k + 1) * n + j];
                h[k * n + j] = a * c + b * s;
                h[(k + 1) * n + j] = -a * s.conj() + b * c;
            }
        }
        for (k, (c, s)) in rotations.iter().enumerate() {
            let k = lo + k;
            let top = (k + 2).min(hi);
            for i in lo..top {
                let a = h[i * n + k];
                let b = h[i * n + k + 1];
                h[i * n + k] = a * *c + b * s.conj();
                h[i * n + k + 1] = -a * *s + b * *c;
            }
        }
        for i in lo..hi {
            h[i * n + i] = h[i * n + i] + shift;
        }
    }

    Ok(eigs)
}

/// Eigenvalues of a complex 2x2 matrix.
fn eig2<R: Real>(
    a: Complex<R>,
    b: Complex<R>,
    c: Complex<R>,
    d: Complex<R>,
) -> [Complex<R>; 2] {
    let half = Complex::new(R::of(0.5), R::zero());
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - Complex::new(R::of(4.0), R::zero()) * det).sqrt();
    [(tr + disc) * half, (tr - disc) * half]
}

/// Complex Givens rotation: returns (c real-as-complex, s, r) with
/// [c, s; -conj(s), c]·[f; g] = [r; 0].
fn givens<R: Real>(f: Complex<R>, g: Complex<R>) -> (Complex<R>, Complex<R>, Complex<R>) {
    let zero = R::zero();
    if g.norm() == zero {
        return (
            Complex::new(R::one(), zero),
            Complex::new(zero, zero),
            f,
        );
    }
    if f.norm() == zero {
        // r = |g|, s = conj(g)/|g|
        let gn = g.norm();
        return (
            Complex::new(zero, zero),
            g.conj() / Complex::new(gn, zero),
            Complex::new(gn, zero),
        );
    }
    let fn_ = f.norm();
    let t = (fn_ * fn_ + g.norm() * g.norm()).sqrt();
    let c = Complex::new(fn_ / t, zero);
    let fsign = f / Complex::new(fn_, zero);
    let s = fsign * g.conj() / Complex::new(t, zero);
    let r = fsign * Complex::new(t, zero);
    (c, s, r)
}
