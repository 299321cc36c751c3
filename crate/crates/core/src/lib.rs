//! Single-BS environment sensing and NLoS user localization.
//!
//! An uplink OFDM simulator plus estimation chain for a base station with an
//! extremely large uniform linear array whose near-field scatterers act as
//! virtual anchors:
//!
//! 1. [`geometry`] — array layout, near-field steering vectors, path delays.
//! 2. [`waveform`] — OFDM symbol generation and frame modulation.
//! 3. [`channel`] — multipath compilation and noisy snapshot synthesis.
//! 4. [`music`] — sample covariance, subspace split, successive
//!    zero-forcing 2D-MUSIC scatterer search.
//! 5. [`isolation`] — SNR-optimal zero-forcing beamformers per detected path.
//! 6. [`delay`] — OFDM demodulation, symbol division, periodogram delays.
//! 7. [`localization`] — least-squares fusion into user position and
//!    BS-user clock difference.
//! 8. [`harness`] — deterministic Monte Carlo sweeps, metrics, CSV output.
//!
//! All numerics are generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! concrete aliases below pin the common `f64` instantiations.

pub mod error;
pub mod scalar;

pub mod channel;
pub mod delay;
pub mod geometry;
pub mod harness;
pub mod isolation;
pub mod localization;
pub mod music;
pub mod waveform;

pub use error::{Error, Result};
pub use scalar::{Cplx, Scalar, SPEED_OF_LIGHT};

/// Complex sample, single precision.
pub type C32 = num_complex::Complex<f32>;
/// Complex sample, double precision.
pub type C64 = num_complex::Complex<f64>;

/// Double-precision instantiations of the main pipeline types.
pub type ArrayGeometry64 = geometry::ArrayGeometry<f64>;
pub type Scenario64 = geometry::Scenario<f64>;
pub type WaveformConfig64 = waveform::WaveformConfig<f64>;
