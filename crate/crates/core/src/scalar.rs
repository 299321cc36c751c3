//! Scalar abstraction so the whole pipeline runs in `f32` or `f64`.

use num_complex::Complex;
use num_traits::{FromPrimitive, Signed, ToPrimitive};

/// Exact speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Floating-point scalar the simulator is generic over.
///
/// `f64` is the default everywhere precision matters (subspace splits,
/// least-squares conditioning); `f32` is supported for memory-bound
/// experimentation. All randomness is drawn in `f64` and converted, so a
/// given seed produces the same underlying realization for every scalar
/// type.
pub trait Scalar:
    nalgebra::RealField + FromPrimitive + ToPrimitive + rustfft::FftNum + Copy + Default
{
    /// Conversion from `f64` for constants and configuration values.
    /// Rounds to the nearest representable value (lossy for `f32`).
    #[inline]
    fn from_f64_lossy(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("finite f64 converts to scalar")
    }

    /// Widening conversion back to `f64` for reporting and I/O.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }

    /// Absolute value. Named to sidestep the `Signed`/`ComplexField`
    /// method collision on generic scalars.
    #[inline]
    fn magnitude(self) -> Self {
        <Self as Signed>::abs(&self)
    }

    /// Speed of light in this scalar type.
    #[inline]
    fn speed_of_light() -> Self {
        Self::from_f64_lossy(SPEED_OF_LIGHT)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex sample over a generic scalar.
pub type Cplx<T> = Complex<T>;

/// Unit phasor `e^{j phase}`.
#[inline]
pub fn cis<T: Scalar>(phase: T) -> Cplx<T> {
    let (sin, cos) = phase.sin_cos();
    Complex::new(cos, sin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_for_f32_and_f64() {
        assert_eq!(f64::from_f64_lossy(1.5), 1.5);
        assert_eq!(f32::from_f64_lossy(1.5), 1.5f32);
        assert_eq!(1.5f32.to_f64_lossy(), 1.5);
        assert_eq!((-2.0f64).magnitude(), 2.0);
    }

    #[test]
    fn cis_is_unit_modulus() {
        let z = cis(0.3f64);
        assert!((z.norm() - 1.0).abs() < 1e-15);
        assert!((z.re - 0.3f64.cos()).abs() < 1e-15);
    }
}
