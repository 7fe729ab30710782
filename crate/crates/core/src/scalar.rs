//! Floating-point abstraction shared by every numerical module.

use nalgebra::{DMatrix, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real scalar the estimators are generic over: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Draws one standard normal variate.
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Machine epsilon.
    fn eps() -> Self;

    /// Smallest positive normal value.
    fn min_positive_value() -> Self;

    fn nan() -> Self;
}

impl Real for f32 {
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn eps() -> Self {
        f32::EPSILON
    }

    fn min_positive_value() -> Self {
        f32::MIN_POSITIVE
    }

    fn nan() -> Self {
        f32::NAN
    }
}

impl Real for f64 {
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn eps() -> Self {
        f64::EPSILON
    }

    fn min_positive_value() -> Self {
        f64::MIN_POSITIVE
    }

    fn nan() -> Self {
        f64::NAN
    }
}

/// Complex scalar over a [`Real`].
pub type C<T> = Complex<T>;

/// Dense complex matrix.
pub type CMatrix<T> = DMatrix<Complex<T>>;

#[inline]
pub(crate) fn deg2rad<T: Real>(deg: T) -> T {
    deg * T::pi() / T::lit(180.0)
}

#[inline]
pub(crate) fn rad2deg<T: Real>(rad: T) -> T {
    rad * T::lit(180.0) / T::pi()
}

/// Squared Frobenius norm of a complex matrix.
pub fn frob_norm_sq<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Draws a circular complex Gaussian with total variance `var`.
pub(crate) fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, var: T) -> Complex<T> {
    let s = (var / T::lit(2.0)).sqrt();
    Complex::new(T::sample_normal(rng) * s, T::sample_normal(rng) * s)
}

/// Modulus of a complex number.
#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

#[inline]
pub fn from_polar<T: Real>(r: T, phase: T) -> Complex<T> {
    Complex::new(r * phase.cos(), r * phase.sin())
}
