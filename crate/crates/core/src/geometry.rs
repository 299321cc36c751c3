//! Physical world model: array layout, scatterer and user geometry, and the
//! closed-form near-field (uniform spherical wave) array response.
//!
//! The array is a uniform linear array on the y-axis: element `m` (1-based)
//! sits at `(0, (m-1)*d)` and element 1 is the phase reference. Scatterers
//! are parameterized by their range and angle seen from the reference
//! element, so a scatterer at `(r, theta)` has Cartesian position
//! `(r cos(theta), r sin(theta))`.

use nalgebra::DVector;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cis, Cplx, Scalar};

/// Uniform linear array description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry<T: Scalar> {
    /// Number of elements `M` (at least 2).
    pub num_elements: usize,
    /// Inter-element spacing `d` in meters.
    pub spacing: T,
    /// Carrier frequency `f_c` in Hz.
    pub carrier_frequency: T,
}

impl<T: Scalar> ArrayGeometry<T> {
    pub fn new(num_elements: usize, spacing: T, carrier_frequency: T) -> Result<Self> {
        if num_elements < 2 {
            return Err(Error::Domain(format!(
                "array needs at least 2 elements, got {num_elements}"
            )));
        }
        if spacing <= T::zero() || !spacing.is_finite() {
            return Err(Error::Domain("element spacing must be positive".into()));
        }
        if carrier_frequency <= T::zero() || !carrier_frequency.is_finite() {
            return Err(Error::Domain("carrier frequency must be positive".into()));
        }
        Ok(Self {
            num_elements,
            spacing,
            carrier_frequency,
        })
    }

    /// Half-wavelength spaced array at the given carrier.
    pub fn half_wavelength(num_elements: usize, carrier_frequency: T) -> Result<Self> {
        let lambda = T::speed_of_light() / carrier_frequency;
        Self::new(
            num_elements,
            lambda / T::from_f64_lossy(2.0),
            carrier_frequency,
        )
    }

    /// Carrier wavelength in meters.
    #[inline]
    pub fn wavelength(&self) -> T {
        T::speed_of_light() / self.carrier_frequency
    }

    /// Array aperture `(M-1)*d` in meters.
    #[inline]
    pub fn aperture(&self) -> T {
        T::from_f64_lossy((self.num_elements - 1) as f64) * self.spacing
    }

    /// Position of element `m` (1-based) in meters.
    pub fn element_position(&self, m: usize) -> Position2D<T> {
        Position2D {
            x: T::zero(),
            y: T::from_f64_lossy((m - 1) as f64) * self.spacing,
        }
    }
}

/// Point in the 2D scene, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position2D<T: Scalar> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Position2D<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// A point scatterer in BS polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer<T: Scalar> {
    /// Range from the reference element, meters (positive).
    pub range_to_bs: T,
    /// Angle of arrival, radians, in `[-pi/2, pi/2)`.
    pub angle: T,
}

impl<T: Scalar> Scatterer<T> {
    pub fn new(range_to_bs: T, angle: T) -> Result<Self> {
        if range_to_bs <= T::zero() || !range_to_bs.is_finite() {
            return Err(Error::Domain("scatterer range must be positive".into()));
        }
        let half_pi = T::frac_pi_2();
        if angle < -half_pi || angle >= half_pi {
            return Err(Error::Domain(
                "scatterer angle must lie in [-pi/2, pi/2)".into(),
            ));
        }
        Ok(Self {
            range_to_bs,
            angle,
        })
    }

    /// Cartesian position `(r cos(theta), r sin(theta))`.
    pub fn position(&self) -> Position2D<T> {
        let (sin, cos) = self.angle.sin_cos();
        Position2D {
            x: self.range_to_bs * cos,
            y: self.range_to_bs * sin,
        }
    }
}

/// User terminal kinematic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState<T: Scalar> {
    pub position: Position2D<T>,
    /// Velocity vector in m/s; may be zero.
    pub velocity: [T; 2],
}

impl<T: Scalar> UeState<T> {
    pub fn stationary(position: Position2D<T>) -> Self {
        Self {
            position,
            velocity: [T::zero(); 2],
        }
    }
}

/// BS-UE clock relationship.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel<T: Scalar> {
    /// Clock difference `tau_d` in seconds (non-negative).
    pub clock_difference: T,
}

impl<T: Scalar> ClockModel<T> {
    pub fn new(clock_difference: T) -> Result<Self> {
        if clock_difference < T::zero() || !clock_difference.is_finite() {
            return Err(Error::Domain("clock difference must be >= 0".into()));
        }
        Ok(Self { clock_difference })
    }

    pub fn synchronized() -> Self {
        Self {
            clock_difference: T::zero(),
        }
    }
}

/// Ground-truth world state for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T: Scalar> {
    pub scatterers: Vec<Scatterer<T>>,
    pub ue: UeState<T>,
    pub clock: ClockModel<T>,
    /// Per-path Doppler overrides in Hz. When present it must have one entry
    /// per scatterer; otherwise Doppler comes from the UE velocity.
    pub doppler_overrides: Option<Vec<T>>,
}

/// Derived per-path propagation quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams<T: Scalar> {
    /// UE-to-scatterer distance, meters.
    pub range_to_ue: T,
    /// Propagation delay `(r_B + r_U)/c`, seconds.
    pub propagation_delay: T,
    /// Delay as seen by the unsynchronized BS, `tau + tau_d`, seconds.
    pub total_delay: T,
    /// Doppler shift of the path, Hz.
    pub doppler: T,
}

/// Near-field array response vector of the uniform spherical wave model.
///
/// Entry `m` (1-based) is `exp(-j*phi_m)` with
/// `phi_m = (2*pi/lambda) * (sqrt(r^2 - 2*r*(m-1)*d*sin(theta) + ((m-1)*d)^2) - r)`,
/// so the reference entry is exactly `1`. The root difference is evaluated as
/// `u / (sqrt(r^2 + u) + r)` with `u = delta^2 - 2*r*delta*sin(theta)` to stay
/// accurate when `r` dwarfs the aperture.
pub fn array_response<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    range: T,
    angle: T,
) -> Result<DVector<Cplx<T>>> {
    if range <= T::zero() || !range.is_finite() {
        return Err(Error::Domain("steering range must be positive".into()));
    }
    let mut out = DVector::from_element(geometry.num_elements, Complex::new(T::zero(), T::zero()));
    steering_into(geometry, range, angle, out.as_mut_slice());
    Ok(out)
}

/// Allocation-free variant of [`array_response`] for grid searches. The
/// caller guarantees `range > 0` and `out.len() == M`.
pub(crate) fn steering_into<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    range: T,
    angle: T,
    out: &mut [Cplx<T>],
) {
    let two_pi_over_lambda = T::two_pi() / geometry.wavelength();
    let sin_theta = angle.sin();
    out[0] = Complex::new(T::one(), T::zero());
    for (m, slot) in out.iter_mut().enumerate().skip(1) {
        let delta = T::from_f64_lossy(m as f64) * geometry.spacing;
        let u = delta * delta - (range + range) * delta * sin_theta;
        let root_diff = u / ((range * range + u).sqrt() + range);
        *slot = cis(-(two_pi_over_lambda * root_diff));
    }
}

/// Geometry-derived parameters of the path UE -> scatterer -> BS.
///
/// Doppler follows the kinematic model `f_D = -(1/lambda) * <v_U, u_hat>`
/// with `u_hat` the unit vector from the UE toward the scatterer; the BS and
/// the scatterers are static, so the path-length rate is the UE radial
/// velocity toward the scatterer.
pub fn path_params<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    scatterer: &Scatterer<T>,
    ue: &UeState<T>,
    clock: &ClockModel<T>,
) -> PathParams<T> {
    let sc_pos = scatterer.position();
    let range_to_ue = ue.position.distance_to(&sc_pos);
    let c = T::speed_of_light();
    let propagation_delay = (scatterer.range_to_bs + range_to_ue) / c;
    let total_delay = propagation_delay + clock.clock_difference;
    let doppler = if range_to_ue > T::zero() {
        let ux = (sc_pos.x - ue.position.x) / range_to_ue;
        let uy = (sc_pos.y - ue.position.y) / range_to_ue;
        let radial = ue.velocity[0] * ux + ue.velocity[1] * uy;
        -radial / geometry.wavelength()
    } else {
        T::zero()
    };
    PathParams {
        range_to_ue,
        propagation_delay,
        total_delay,
        doppler,
    }
}

/// Rayleigh distance `2*D^2/lambda` with aperture `D = (M-1)*d`; sources
/// closer than this are in the radiative near field of the array.
pub fn rayleigh_distance<T: Scalar>(geometry: &ArrayGeometry<T>) -> T {
    let d = geometry.aperture();
    T::from_f64_lossy(2.0) * d * d / geometry.wavelength()
}
