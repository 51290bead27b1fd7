//! Scalar abstraction shared by the dynamics, spectral and analysis code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the numerical core is generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Off-diagonal mass below which the eigensolver declares convergence.
    const EIGEN_TOL: Self;
    /// Absolute slack used by the inequality checks.
    const CHECK_SLACK: Self;

    /// Lossy conversion from `f64`; panics only for values the type cannot represent at all.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value not representable in scalar type")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize value not representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const EIGEN_TOL: Self = 1e-10;
    const CHECK_SLACK: Self = 1e-9;
}

impl Scalar for f32 {
    const EIGEN_TOL: Self = 1e-4;
    const CHECK_SLACK: Self = 1e-4;
}

/// A vector in R³.
pub type Vec3<T> = [T; 3];

pub(crate) fn zero3<T: Scalar>() -> Vec3<T> {
    [T::zero(); 3]
}

pub(crate) fn sub3<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add_scaled3<T: Scalar>(a: &Vec3<T>, s: T, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

pub(crate) fn norm3<T: Scalar>(a: &Vec3<T>) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn mean3<T: Scalar>(vs: &[Vec3<T>]) -> Vec3<T> {
    let n = T::of_usize(vs.len());
    let mut acc = zero3::<T>();
    for v in vs {
        for l in 0..3 {
            acc[l] = acc[l] + v[l];
        }
    }
    [acc[0] / n, acc[1] / n, acc[2] / n]
}
