//! User localization from virtual anchors: the detected scatterers act as
//! reference points, each carrying a measured delay sum (propagation delay
//! plus the unknown BS-UE clock difference). Differencing the squared-range
//! equations against the first anchor linearizes the problem into
//! `D [x_U, y_U, tau_d]^T = p`, solved by least squares when at least four
//! anchors are available.
//!
//! The `c`-scaled clock column makes the printed system ill-conditioned
//! (~3e8 spread), so the solver rescales that column internally, solves via
//! SVD, and maps the clock variable back; the reported residual refers to
//! the original system.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Position2D;
use crate::music::ScattererEstimate;
use crate::scalar::Scalar;

/// One virtual anchor: a located scatterer plus the delay sum measured on
/// its isolated stream. The pseudo-range is `q = c*tau_s - r_B`, i.e. the
/// UE-to-anchor distance inflated by the clock term `c*tau_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorObservation<T: Scalar> {
    pub position: Position2D<T>,
    /// Measured delay sum `tau_s`, seconds.
    pub delay_sum: T,
    /// `c*tau_s - r_B`, meters.
    pub pseudo_range: T,
}

impl<T: Scalar> AnchorObservation<T> {
    /// Pairs a scatterer estimate with the delay estimated from its own
    /// beamformed stream.
    pub fn from_estimate(estimate: &ScattererEstimate<T>, delay_sum: T) -> Self {
        let (sin, cos) = estimate.angle.sin_cos();
        Self {
            position: Position2D::new(estimate.range * cos, estimate.range * sin),
            delay_sum,
            pseudo_range: T::speed_of_light() * delay_sum - estimate.range,
        }
    }
}

/// Back-substituted UE-to-anchor range with its validity flag and the
/// geometric consistency `| ||anchor - ue|| - r |`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeCheck<T: Scalar> {
    pub range: T,
    /// False when the back-substituted range is non-positive.
    pub valid: bool,
    pub consistency: T,
}

/// Solved UE state.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult<T: Scalar> {
    pub position: Position2D<T>,
    /// Estimated clock difference, seconds.
    pub clock_difference: T,
    /// Per-anchor back-substituted ranges (empty until back substitution).
    pub anchor_ranges: Vec<RangeCheck<T>>,
    /// `||D x - p||` of the solved system.
    pub residual_norm: T,
}

/// Anchor-differenced linear system. Row `i` differences anchor `i+1`
/// against anchor 0:
/// `[2(x_0 - x_i), 2(y_0 - y_i), 2(q_i - q_0) c] [x, y, tau_d]^T
///  = x_0^2 - x_i^2 + y_0^2 - y_i^2 + q_i^2 - q_0^2`.
pub fn build_linear_system<T: Scalar>(
    observations: &[AnchorObservation<T>],
) -> Result<(DMatrix<T>, DVector<T>)> {
    if observations.len() < 2 {
        return Err(Error::InsufficientAnchors {
            have: observations.len(),
            need: 2,
        });
    }
    let rows = observations.len() - 1;
    let first = &observations[0];
    let two = T::from_f64_lossy(2.0);
    let c = T::speed_of_light();
    let mut d = DMatrix::from_element(rows, 3, T::zero());
    let mut p = DVector::from_element(rows, T::zero());
    for (row, obs) in observations[1..].iter().enumerate() {
        d[(row, 0)] = two * (first.position.x - obs.position.x);
        d[(row, 1)] = two * (first.position.y - obs.position.y);
        d[(row, 2)] = two * (obs.pseudo_range - first.pseudo_range) * c;
        p[row] = first.position.x * first.position.x - obs.position.x * obs.position.x
            + first.position.y * first.position.y
            - obs.position.y * obs.position.y
            + obs.pseudo_range * obs.pseudo_range
            - first.pseudo_range * first.pseudo_range;
    }
    Ok((d, p))
}

/// Least-squares solve of the anchor-differenced system. Requires at least
/// three rows (four anchors) and full column rank.
pub fn solve_ue<T: Scalar>(d: &DMatrix<T>, p: &DVector<T>) -> Result<LocalizationResult<T>> {
    if d.nrows() < 3 {
        return Err(Error::InsufficientAnchors {
            have: d.nrows() + 1,
            need: 4,
        });
    }
    if d.ncols() != 3 || p.len() != d.nrows() {
        return Err(Error::DimensionMismatch(
            "system must be (L-1) x 3 with matching right-hand side".into(),
        ));
    }
    let c = T::speed_of_light();
    // Substitute u = c * tau_d: divide the clock column by c.
    let mut scaled = d.clone();
    for row in 0..scaled.nrows() {
        scaled[(row, 2)] /= c;
    }
    let svd = scaled.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let tol = s_max * T::default_epsilon().sqrt() * T::from_f64_lossy(1e-2);
    if s_min <= tol {
        return Err(Error::DegenerateGeometry {
            condition: if s_min > T::zero() {
                (s_max / s_min).to_f64_lossy()
            } else {
                f64::INFINITY
            },
        });
    }
    let solution = svd
        .solve(p, T::default_epsilon())
        .map_err(|e| Error::Domain(format!("least squares failed: {e}")))?;
    let residual = (scaled * &solution - p).norm();
    Ok(LocalizationResult {
        position: Position2D::new(solution[0], solution[1]),
        clock_difference: solution[2] / c,
        anchor_ranges: Vec::new(),
        residual_norm: residual,
    })
}

/// Back-substitutes the solved clock into every anchor:
/// `r_U = c (tau_s - tau_d) - r_B = q - c*tau_d`, flagged invalid when
/// non-positive, with the distance-vs-range consistency attached.
pub fn back_substitute<T: Scalar>(
    result: &LocalizationResult<T>,
    observations: &[AnchorObservation<T>],
) -> Vec<RangeCheck<T>> {
    let c = T::speed_of_light();
    observations
        .iter()
        .map(|obs| {
            let range = obs.pseudo_range - c * result.clock_difference;
            let distance = obs.position.distance_to(&result.position);
            RangeCheck {
                range,
                valid: range > T::zero(),
                consistency: (distance - range).magnitude(),
            }
        })
        .collect()
}

/// Full chain: build the system, solve, back-substitute.
pub fn localize<T: Scalar>(
    observations: &[AnchorObservation<T>],
) -> Result<LocalizationResult<T>> {
    let (d, p) = build_linear_system(observations)?;
    let mut result = solve_ue(&d, &p)?;
    result.anchor_ranges = back_substitute(&result, observations);
    Ok(result)
}

/// Known-clock variant: with `tau_d` fixed the ranges are known outright and
/// three anchors suffice for the two remaining unknowns.
pub fn localize_known_clock<T: Scalar>(
    observations: &[AnchorObservation<T>],
    clock_difference: T,
) -> Result<LocalizationResult<T>> {
    if observations.len() < 3 {
        return Err(Error::InsufficientAnchors {
            have: observations.len(),
            need: 3,
        });
    }
    let c = T::speed_of_light();
    let first = &observations[0];
    let two = T::from_f64_lossy(2.0);
    let rows = observations.len() - 1;
    let r_first = first.pseudo_range - c * clock_difference;
    let mut d = DMatrix::from_element(rows, 2, T::zero());
    let mut p = DVector::from_element(rows, T::zero());
    for (row, obs) in observations[1..].iter().enumerate() {
        let r_obs = obs.pseudo_range - c * clock_difference;
        d[(row, 0)] = two * (first.position.x - obs.position.x);
        d[(row, 1)] = two * (first.position.y - obs.position.y);
        p[row] = first.position.x * first.position.x - obs.position.x * obs.position.x
            + first.position.y * first.position.y
            - obs.position.y * obs.position.y
            + r_obs * r_obs
            - r_first * r_first;
    }
    let svd = d.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if s_min <= s_max * T::default_epsilon().sqrt() * T::from_f64_lossy(1e-2) {
        return Err(Error::DegenerateGeometry {
            condition: if s_min > T::zero() {
                (s_max / s_min).to_f64_lossy()
            } else {
                f64::INFINITY
            },
        });
    }
    let solution = svd
        .solve(&p, T::default_epsilon())
        .map_err(|e| Error::Domain(format!("least squares failed: {e}")))?;
    let residual = (&d * &solution - &p).norm();
    let mut result = LocalizationResult {
        position: Position2D::new(solution[0], solution[1]),
        clock_difference,
        anchor_ranges: Vec::new(),
        residual_norm: residual,
    };
    result.anchor_ranges = back_substitute(&result, observations);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Scatterer;
    use crate::scalar::SPEED_OF_LIGHT;
    use approx::assert_relative_eq;

    fn far_anchors(ue: Position2D<f64>, tau_d: f64) -> Vec<AnchorObservation<f64>> {
        [
            (26.6f64, 11.0f64),
            (5.7, -23.0),
            (23.0, 57.0),
            (17.8, -16.0),
            (15.4, -6.0),
        ]
        .iter()
        .map(|&(r, deg)| {
            let sc = Scatterer::new(r, deg.to_radians()).unwrap();
            let pos = sc.position();
            let r_u = pos.distance_to(&ue);
            let tau_s = (r + r_u) / SPEED_OF_LIGHT + tau_d;
            AnchorObservation {
                position: pos,
                delay_sum: tau_s,
                pseudo_range: SPEED_OF_LIGHT * tau_s - r,
            }
        })
        .collect()
    }

    fn ue() -> Position2D<f64> {
        Position2D::new(15.0 * 3f64.sqrt(), 15.0)
    }

    #[test]
    fn system_dimensions_follow_anchor_count() {
        let anchors = far_anchors(ue(), 0.1e-6);
        let (d, p) = build_linear_system(&anchors[..4]).unwrap();
        assert_eq!(d.nrows(), 3);
        assert_eq!(d.ncols(), 3);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn identical_anchors_produce_a_zero_row() {
        let anchors = far_anchors(ue(), 0.0);
        let duplicated = vec![anchors[0], anchors[0], anchors[1]];
        let (d, p) = build_linear_system(&duplicated).unwrap();
        for col in 0..3 {
            assert_eq!(d[(0, col)], 0.0);
        }
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn first_row_matches_hand_evaluation() {
        let tau_d = 0.2e-6;
        let anchors = far_anchors(ue(), tau_d);
        let (d, p) = build_linear_system(&anchors).unwrap();
        let (a0, a1) = (&anchors[0], &anchors[1]);
        assert_relative_eq!(
            d[(0, 0)],
            2.0 * (a0.position.x - a1.position.x),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            d[(0, 1)],
            2.0 * (a0.position.y - a1.position.y),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            d[(0, 2)],
            2.0 * (a1.pseudo_range - a0.pseudo_range) * SPEED_OF_LIGHT,
            max_relative = 1e-9
        );
        let expected_p = a0.position.x.powi(2) - a1.position.x.powi(2)
            + a0.position.y.powi(2)
            - a1.position.y.powi(2)
            + a1.pseudo_range.powi(2)
            - a0.pseudo_range.powi(2);
        assert_relative_eq!(p[0], expected_p, max_relative = 1e-9);
    }

    #[test]
    fn exact_observations_recover_position_and_clock() {
        let tau_d = 0.2e-6;
        let anchors = far_anchors(ue(), tau_d);
        let result = localize(&anchors).unwrap();
        assert!((result.position.x - ue().x).abs() <= 1e-6);
        assert!((result.position.y - ue().y).abs() <= 1e-6);
        assert!((result.clock_difference - tau_d).abs() <= 1e-12);
        // Consistent data leaves essentially no residual.
        let (_, p) = build_linear_system(&anchors).unwrap();
        assert!(result.residual_norm <= 1e-9 * p.norm());
        for check in &result.anchor_ranges {
            assert!(check.valid);
            assert!(check.consistency <= 1e-6);
        }
    }

    #[test]
    fn three_anchors_are_insufficient() {
        let anchors = far_anchors(ue(), 0.1e-6);
        let err = localize(&anchors[..3]).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientAnchors { have: 3, need: 4 }
        ));
    }

    #[test]
    fn parallel_difference_rows_are_degenerate() {
        // Anchors on a straight line with identical pseudo-ranges: every row
        // of D is proportional to (x_0 - x_i, 0, 0).
        let anchors: Vec<AnchorObservation<f64>> = (0..5)
            .map(|i| AnchorObservation {
                position: Position2D::new(1.0 + i as f64, 0.0),
                delay_sum: 1e-7,
                pseudo_range: 12.0,
            })
            .collect();
        let err = localize(&anchors).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { .. }));
    }

    #[test]
    fn back_substitution_recovers_true_ranges() {
        let tau_d = 0.15e-6;
        let anchors = far_anchors(ue(), tau_d);
        let result = localize(&anchors).unwrap();
        let checks = back_substitute(&result, &anchors);
        for (check, obs) in checks.iter().zip(&anchors) {
            let true_range = obs.position.distance_to(&ue());
            assert!((check.range - true_range).abs() <= 1e-6);
        }
    }

    #[test]
    fn clock_bias_shifts_every_range_by_minus_c_delta() {
        let anchors = far_anchors(ue(), 0.1e-6);
        let result = localize(&anchors).unwrap();
        let delta = 3e-9;
        let mut biased = result.clone();
        biased.clock_difference += delta;
        let base = back_substitute(&result, &anchors);
        let shifted = back_substitute(&biased, &anchors);
        for (b, s) in base.iter().zip(&shifted) {
            assert_relative_eq!(
                s.range - b.range,
                -SPEED_OF_LIGHT * delta,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn non_positive_ranges_are_flagged() {
        let anchors = far_anchors(ue(), 0.0);
        let result = LocalizationResult {
            position: ue(),
            clock_difference: 1.0, // absurd clock: ranges go negative
            anchor_ranges: Vec::new(),
            residual_norm: 0.0,
        };
        for check in back_substitute(&result, &anchors) {
            assert!(!check.valid);
        }
    }

    #[test]
    fn translation_moves_the_solution_rigidly() {
        let tau_d = 0.1e-6;
        let offset = (13.0f64, -4.5f64);
        let base = localize(&far_anchors(ue(), tau_d)).unwrap();
        let moved_ue = Position2D::new(ue().x + offset.0, ue().y + offset.1);
        let translated: Vec<AnchorObservation<f64>> = far_anchors(ue(), tau_d)
            .iter()
            .map(|obs| {
                let position =
                    Position2D::new(obs.position.x + offset.0, obs.position.y + offset.1);
                // Recompute exact delay sums for the translated world.
                let r_b_unchanged = SPEED_OF_LIGHT * obs.delay_sum - obs.pseudo_range;
                let r_u = position.distance_to(&moved_ue);
                let tau_s = (r_b_unchanged + r_u) / SPEED_OF_LIGHT + tau_d
                    - (r_b_unchanged + obs.position.distance_to(&ue())) / SPEED_OF_LIGHT;
                AnchorObservation {
                    position,
                    delay_sum: obs.delay_sum + (tau_s - tau_d),
                    pseudo_range: obs.pseudo_range
                        + (r_u - obs.position.distance_to(&ue())),
                }
            })
            .collect();
        let moved = localize(&translated).unwrap();
        assert!((moved.position.x - base.position.x - offset.0).abs() <= 1e-6);
        assert!((moved.position.y - base.position.y - offset.1).abs() <= 1e-6);
        assert!((moved.clock_difference - base.clock_difference).abs() <= 1e-12);
    }

    #[test]
    fn reference_anchor_choice_does_not_move_the_solution() {
        let tau_d = 0.1e-6;
        let anchors = far_anchors(ue(), tau_d);
        let base = localize(&anchors).unwrap();
        for rotate in 1..anchors.len() {
            let mut permuted = anchors.clone();
            permuted.rotate_left(rotate);
            let other = localize(&permuted).unwrap();
            assert!((other.position.x - base.position.x).abs() <= 1e-9);
            assert!((other.position.y - base.position.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn known_clock_mode_works_with_three_anchors() {
        let tau_d = 0.12e-6;
        let anchors = far_anchors(ue(), tau_d);
        let result = localize_known_clock(&anchors[..3], tau_d).unwrap();
        assert!((result.position.x - ue().x).abs() <= 1e-6);
        assert!((result.position.y - ue().y).abs() <= 1e-6);
        assert!(matches!(
            localize_known_clock(&anchors[..2], tau_d).unwrap_err(),
            Error::InsufficientAnchors { have: 2, need: 3 }
        ));
    }
}
