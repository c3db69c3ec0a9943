//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All physics is written against [`Real`], which is implemented for `f32`
//! and `f64`. Validation tolerances scale with the precision of the type, so
//! the same invariants are enforced for both (the `f64` values are the ones
//! quoted throughout the documentation).

use std::fmt::{Debug, Display};

use nalgebra::{Complex, DMatrix, DVector, RealField};
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by the waveform analytics and the propagators.
pub trait Real:
    RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync
{
    /// Tolerance for Hermiticity, trace and normalisation checks.
    fn validation_tol() -> Self;
    /// Per-segment unitarity tolerance of the propagator.
    fn unitarity_tol() -> Self;
    /// Default relative tolerance of the adaptive quadrature.
    fn quadrature_tol() -> Self;
    /// Relative tolerance used when checking a resonance precondition.
    fn resonance_tol() -> Self;

    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Euclidean remainder into `[0, period)`.
    #[inline]
    fn wrap(self, period: Self) -> Self {
        let r = self - (self / period).floor() * period;
        if r >= period || r < Self::zero() {
            Self::zero()
        } else {
            r
        }
    }
}

impl Real for f64 {
    fn validation_tol() -> Self {
        1e-12
    }
    fn unitarity_tol() -> Self {
        1e-10
    }
    fn quadrature_tol() -> Self {
        1e-10
    }
    fn resonance_tol() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn validation_tol() -> Self {
        5e-5
    }
    fn unitarity_tol() -> Self {
        5e-5
    }
    fn quadrature_tol() -> Self {
        2e-5
    }
    fn resonance_tol() -> Self {
        1e-4
    }
}

pub type C<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

/// `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// `|z|` for a complex scalar.
#[inline]
pub fn modulus<T: Real>(z: C<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}
