//! Zero-forcing path isolation: one unit-norm beamformer per detected
//! scatterer, orthogonal to every other detected steering vector and
//! SNR-optimal under that constraint, `f_l = Q_l a_l / ||Q_l a_l||` with
//! `Q_l` the projector onto the complement of the interfering steerings.
//!
//! Projectors are built through orthonormalization rather than the literal
//! normal-equations inverse; the Gram matrix of closely spaced scatterers is
//! too ill-conditioned for the latter.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::channel::SnapshotMatrix;
use crate::error::{Error, Result};
use crate::geometry::{array_response, ArrayGeometry};
use crate::music::{ScattererEstimate, ZfProjector};
use crate::scalar::{Cplx, Scalar};

/// The beamformer bank `F = [f_1 ... f_L]` and the steering set it nulls.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerBank<T: Scalar> {
    /// `M x L` matrix of unit-norm beamformers, one column per estimate.
    pub weights: DMatrix<Cplx<T>>,
    /// `M x L` matrix of the estimated steering vectors.
    pub steering: DMatrix<Cplx<T>>,
}

impl<T: Scalar> BeamformerBank<T> {
    #[inline]
    pub fn num_beams(&self) -> usize {
        self.weights.ncols()
    }
}

/// Scalar stream obtained by beamforming the snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolatedStream<T: Scalar> {
    pub samples: Vec<Cplx<T>>,
    /// Index of the estimate whose beamformer produced this stream.
    pub estimate_index: usize,
}

/// Builds the SNR-optimal zero-forcing beamformers for the estimates.
/// The arbitrary beamformer phase is fixed so that `f_l^H a_l` is real and
/// positive; downstream delay estimation is invariant to it anyway.
pub fn zf_beamformers<T: Scalar>(
    estimates: &[ScattererEstimate<T>],
    geometry: &ArrayGeometry<T>,
) -> Result<BeamformerBank<T>> {
    if estimates.is_empty() {
        return Err(Error::Domain("beamformer bank needs >= 1 estimate".into()));
    }
    let steerings: Vec<DVector<Cplx<T>>> = estimates
        .iter()
        .map(|e| array_response(geometry, e.range, e.angle))
        .collect::<Result<_>>()?;
    // Fails with the colliding pair if any steering is linearly dependent.
    ZfProjector::nulling(&steerings)?;

    let m = geometry.num_elements;
    let mut weights = Vec::with_capacity(estimates.len());
    for l in 0..steerings.len() {
        let interferers: Vec<DVector<Cplx<T>>> = steerings
            .iter()
            .enumerate()
            .filter_map(|(i, s)| (i != l).then(|| s.clone()))
            .collect();
        let projected = if interferers.is_empty() {
            steerings[l].clone()
        } else {
            ZfProjector::nulling(&interferers)?.apply(&steerings[l])
        };
        let norm = projected.norm();
        if norm <= T::default_epsilon().sqrt() * T::from_f64_lossy(m as f64).sqrt() {
            return Err(Error::DuplicateSteering {
                first: l,
                second: l,
            });
        }
        weights.push(projected.unscale(norm));
    }
    Ok(BeamformerBank {
        weights: DMatrix::from_columns(&weights),
        steering: DMatrix::from_columns(&steerings),
    })
}

/// Applies every beamformer to every snapshot: stream `l` has samples
/// `f_l^H y[k]`.
pub fn isolate_streams<T: Scalar>(
    snapshots: &SnapshotMatrix<T>,
    bank: &BeamformerBank<T>,
) -> Result<Vec<IsolatedStream<T>>> {
    if bank.weights.nrows() != snapshots.num_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "bank has {} antennas, snapshots {}",
            bank.weights.nrows(),
            snapshots.num_antennas()
        )));
    }
    let projected = bank.weights.adjoint() * &snapshots.data; // L x K
    Ok((0..bank.num_beams())
        .map(|l| IsolatedStream {
            samples: projected.row(l).iter().cloned().collect(),
            estimate_index: l,
        })
        .collect())
}
