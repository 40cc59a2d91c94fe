//! Forward-mode dual numbers with a dynamic gradient vector.
//!
//! A [`Dual`] carries a value and the vector of its partial derivatives with
//! respect to a seeded coordinate basis. An empty gradient stands for "all
//! partials zero", so constants broadcast without allocating. `Dual<T>` is
//! itself a [`Scalar`], hence duals nest for higher derivatives.

use crate::scalar::Scalar;
use num_traits::{One, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Debug)]
pub struct Dual<T> {
    pub val: T,
    pub grad: Vec<T>,
}

impl<T: Clone + Zero> Dual<T> {
    pub fn constant(val: T) -> Self {
        Dual { val, grad: Vec::new() }
    }

    /// Gradient padded to `dim` entries.
    pub fn grad_padded(&self, dim: usize) -> Vec<T> {
        let mut g = self.grad.clone();
        g.resize(dim, T::zero());
        g
    }
}

impl<T: Clone + Zero + One> Dual<T> {
    /// Seed variable `index` out of `dim`: unit gradient basis vector.
    pub fn seeded(val: T, index: usize, dim: usize) -> Self {
        let mut grad = vec![T::zero(); dim];
        grad[index] = T::one();
        Dual { val, grad }
    }
}

/// Seeds a full coordinate vector: coordinate `a` becomes a dual with unit
/// gradient in slot `a`.
pub fn seed_coords<T: Clone + Zero + One>(coords: &[T]) -> Vec<Dual<T>> {
    let n = coords.len();
    coords
        .iter()
        .enumerate()
        .map(|(a, c)| {
            let mut grad = vec![T::zero(); n];
            grad[a] = T::one();
            Dual { val: c.clone(), grad }
        })
        .collect()
}

fn zip_grad<T, F>(a: &[T], b: &[T], f: F) -> Vec<T>
where
    T: Clone + Zero,
    F: Fn(T, T) -> T,
{
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).cloned().unwrap_or_else(T::zero);
            let y = b.get(i).cloned().unwrap_or_else(T::zero);
            f(x, y)
        })
        .collect()
}

impl<T> Add for Dual<T>
where
    T: Clone + Zero + Add<Output = T>,
{
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual {
            val: self.val.clone() + rhs.val.clone(),
            grad: zip_grad(&self.grad, &rhs.grad, |x, y| x + y),
        }
    }
}

impl<T> Sub for Dual<T>
where
    T: Clone + Zero + Sub<Output = T>,
{
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual {
            val: self.val.clone() - rhs.val.clone(),
            grad: zip_grad(&self.grad, &rhs.grad, |x, y| x - y),
        }
    }
}

impl<T> Mul for Dual<T>
where
    T: Clone + Zero + Add<Output = T> + Mul<Output = T>,
{
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        // (a + εa')(b + εb') = ab + ε(a'b + ab')
        let grad = zip_grad(&self.grad, &rhs.grad, |ap, bp| {
            ap * rhs.val.clone() + self.val.clone() * bp
        });
        Dual { val: self.val * rhs.val, grad }
    }
}

impl<T> Div for Dual<T>
where
    T: Clone + Zero + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        // (a + εa')/(b + εb') = a/b + ε(a' - (a/b) b')/b
        let q = self.val.clone() / rhs.val.clone();
        let grad = zip_grad(&self.grad, &rhs.grad, |ap, bp| {
            (ap - q.clone() * bp) / rhs.val.clone()
        });
        Dual { val: q, grad }
    }
}

impl<T> Neg for Dual<T>
where
    T: Clone + Neg<Output = T>,
{
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            val: -self.val,
            grad: self.grad.into_iter().map(|g| -g).collect(),
        }
    }
}

impl<T> Zero for Dual<T>
where
    T: Clone + Zero + Add<Output = T>,
{
    fn zero() -> Self {
        Dual { val: T::zero(), grad: Vec::new() }
    }
    fn is_zero(&self) -> bool {
        self.val.is_zero() && self.grad.iter().all(|g| g.is_zero())
    }
}

impl<T> One for Dual<T>
where
    T: Clone + Zero + One + Add<Output = T> + Mul<Output = T>,
{
    fn one() -> Self {
        Dual { val: T::one(), grad: Vec::new() }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    type R = T::R;

    fn from_complex(z: num_complex::Complex<T::R>) -> Self {
        Dual::constant(T::from_complex(z))
    }
}
