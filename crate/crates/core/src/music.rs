//! Scatterer detection from the snapshot covariance: eigendecomposition,
//! signal/noise subspace split, and the successive zero-forcing 2D-MUSIC
//! search over the range-angle plane.
//!
//! The search works SIC-style: detect the strongest peak of the projected
//! spectrum `||E_s^H * (W a / ||W a||)||^2`, zero-force its steering vector
//! out of both the covariance and the test vectors, re-split, and repeat
//! until the residual peak drops below the detection threshold. Near-field
//! steering vectors depend on range as well as angle, so the spectrum is
//! genuinely two-dimensional and range resolution degrades with distance;
//! the default grid is logarithmic in range with two local refinement zooms
//! around every accepted peak.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{steering_into, ArrayGeometry};
use crate::scalar::{Cplx, Scalar};

/// Unnormalized sample covariance `R = Y Y^H` plus the snapshot count that
/// produced it (needed by the MDL order rule; scaling by `1/K` would leave
/// every subspace and every estimate unchanged).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix<T: Scalar> {
    pub matrix: DMatrix<Cplx<T>>,
    pub num_snapshots: usize,
}

/// `R = Y Y^H`, accumulated column by column. Columns are processed in
/// fixed-size chunks that may run on worker threads; partial sums are folded
/// in chunk order, so the result is independent of the thread count.
pub fn sample_covariance<T: Scalar>(snapshots: &crate::channel::SnapshotMatrix<T>) -> CovarianceMatrix<T> {
    let m = snapshots.num_antennas();
    let k = snapshots.num_snapshots();
    let zero = Complex::new(T::zero(), T::zero());
    const CHUNK: usize = 4096;

    let partials: Vec<DMatrix<Cplx<T>>> = (0..k)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|cols| {
            let mut acc = DMatrix::from_element(m, m, zero);
            for &col in cols {
                let y = snapshots.data.column(col);
                // Upper triangle of the rank-1 update; mirrored at the end.
                for j in 0..m {
                    let yj = y[j].conj();
                    for i in 0..=j {
                        acc[(i, j)] += y[i] * yj;
                    }
                }
            }
            acc
        })
        .collect();

    let mut matrix = DMatrix::from_element(m, m, zero);
    for p in partials {
        matrix += p;
    }
    for j in 0..m {
        for i in 0..j {
            matrix[(j, i)] = matrix[(i, j)].conj();
        }
    }
    CovarianceMatrix {
        matrix,
        num_snapshots: k,
    }
}

/// How many eigenvectors form the signal subspace.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ModelOrderRule {
    /// Fixed, externally known source count.
    KnownCount { count: usize },
    /// Largest index whose eigenvalue exceeds `ratio` times its successor
    /// (default `ratio = 10`), capped at `max_order`. Indices whose
    /// eigenvalue has fallen below `sqrt(eps)` of the largest are treated as
    /// numerical junk and never start a gap.
    EigenvalueRatio { ratio: f64, max_order: usize },
    /// Minimum description length criterion, capped at `max_order`.
    Mdl { max_order: usize },
}

impl Default for ModelOrderRule {
    fn default() -> Self {
        ModelOrderRule::EigenvalueRatio {
            ratio: 10.0,
            max_order: 8,
        }
    }
}

/// Orthonormal signal/noise split of a covariance eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<T: Scalar> {
    /// `M x d` orthonormal signal basis (descending eigenvalue order).
    pub signal: DMatrix<Cplx<T>>,
    /// `M x (M-d)` orthonormal noise basis.
    pub noise: DMatrix<Cplx<T>>,
    /// All eigenvalues, descending, clamped to be non-negative.
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> SubspaceBasis<T> {
    #[inline]
    pub fn signal_dim(&self) -> usize {
        self.signal.ncols()
    }
}

/// Eigendecomposition of the Hermitian covariance and signal/noise split
/// under the given model order rule.
pub fn eig_split<T: Scalar>(
    covariance: &CovarianceMatrix<T>,
    rule: &ModelOrderRule,
) -> Result<SubspaceBasis<T>> {
    let r = &covariance.matrix;
    if r.nrows() != r.ncols() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain(
            "covariance contains non-finite entries".into(),
        ));
    }
    let m = r.nrows();
    // Work on the Hermitian average; projection round-trips leave 1e-16-level
    // asymmetry that the tridiagonalization would otherwise amplify.
    let herm = (r + r.adjoint()).scale(T::from_f64_lossy(0.5));
    let eig = herm.symmetric_eigen();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let eigenvalues: Vec<T> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(T::zero()))
        .collect();
    let vectors: Vec<DVector<Cplx<T>>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let dim = signal_dimension(&eigenvalues, covariance.num_snapshots, rule).min(m);
    let zero = Complex::new(T::zero(), T::zero());
    let columns_or_empty = |cols: &[DVector<Cplx<T>>]| {
        if cols.is_empty() {
            DMatrix::from_element(m, 0, zero)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    Ok(SubspaceBasis {
        signal: columns_or_empty(&vectors[..dim]),
        noise: columns_or_empty(&vectors[dim..]),
        eigenvalues,
    })
}

fn signal_dimension<T: Scalar>(
    eigenvalues: &[T],
    num_snapshots: usize,
    rule: &ModelOrderRule,
) -> usize {
    let m = eigenvalues.len();
    match *rule {
        ModelOrderRule::KnownCount { count } => count.min(m),
        ModelOrderRule::EigenvalueRatio { ratio, max_order } => {
            let rho = T::from_f64_lossy(ratio);
            let floor = eigenvalues[0] * T::default_epsilon().sqrt();
            let mut dim = 0;
            for i in 0..m.saturating_sub(1).min(max_order) {
                if eigenvalues[i] >= floor && eigenvalues[i] >= rho * eigenvalues[i + 1] {
                    dim = i + 1;
                }
            }
            dim
        }
        ModelOrderRule::Mdl { max_order } => {
            let k = T::from_f64_lossy(num_snapshots.max(2) as f64);
            let floor = eigenvalues[0].max(T::one()) * T::from_f64_lossy(1e-30);
            let logs: Vec<T> = eigenvalues.iter().map(|&l| l.max(floor).ln()).collect();
            let lin: Vec<T> = eigenvalues.iter().map(|&l| l.max(floor)).collect();
            let mut best = (T::max_value().unwrap_or_else(T::one), 0usize);
            for d in 0..m.min(max_order + 1) {
                let rest = (m - d) as f64;
                let log_gm: T = logs[d..].iter().fold(T::zero(), |a, &b| a + b)
                    / T::from_f64_lossy(rest);
                let am: T =
                    lin[d..].iter().fold(T::zero(), |a, &b| a + b) / T::from_f64_lossy(rest);
                let fit = -k * T::from_f64_lossy(rest) * (log_gm - am.ln());
                let penalty = T::from_f64_lossy(0.5 * d as f64 * (2 * m - d) as f64) * k.ln();
                let score = fit + penalty;
                if score < best.0 {
                    best = (score, d);
                }
            }
            best.1
        }
    }
}

/// Projection `W = I - U U^H` onto the orthogonal complement of a set of
/// steering vectors, stored through an orthonormal basis `U` of the nulled
/// span. Idempotent and Hermitian by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfProjector<T: Scalar> {
    dim: usize,
    /// `M x j` orthonormal basis of the zero-forced subspace.
    nulled: DMatrix<Cplx<T>>,
}

impl<T: Scalar> ZfProjector<T> {
    /// The identity projector (nothing nulled yet).
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            nulled: DMatrix::from_element(dim, 0, Complex::new(T::zero(), T::zero())),
        }
    }

    /// Projector onto the complement of `span(columns)`, built by modified
    /// Gram-Schmidt. A column that is numerically dependent on its
    /// predecessors triggers [`Error::DuplicateSteering`] naming the pair.
    pub fn nulling(columns: &[DVector<Cplx<T>>]) -> Result<Self> {
        let dim = match columns.first() {
            Some(c) => c.len(),
            None => {
                return Err(Error::Domain(
                    "projector needs the ambient dimension; use identity()".into(),
                ))
            }
        };
        let mut basis: Vec<DVector<Cplx<T>>> = Vec::with_capacity(columns.len());
        let tol = T::default_epsilon().sqrt() * T::from_f64_lossy(dim as f64).sqrt();
        for (idx, col) in columns.iter().enumerate() {
            let mut v = col.clone();
            let original_norm = v.norm();
            // Two MGS passes for orthogonality at the 1e-15 level.
            for _ in 0..2 {
                for b in &basis {
                    let coeff = b.dotc(&v);
                    v.axpy(-coeff, b, Complex::new(T::one(), T::zero()));
                }
            }
            let residual = v.norm();
            if residual <= tol * original_norm {
                let closest = Self::most_correlated(columns, idx);
                return Err(Error::DuplicateSteering {
                    first: closest,
                    second: idx,
                });
            }
            basis.push(v.unscale(residual));
        }
        Ok(Self {
            dim,
            nulled: DMatrix::from_columns(&basis),
        })
    }

    fn most_correlated(columns: &[DVector<Cplx<T>>], idx: usize) -> usize {
        let mut best = (T::zero(), 0);
        for (j, other) in columns.iter().enumerate().take(idx) {
            let c = other.dotc(&columns[idx]).norm_sqr();
            if c >= best.0 {
                best = (c, j);
            }
        }
        best.1
    }

    #[inline]
    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// Number of directions forced to zero.
    #[inline]
    pub fn nulled_dim(&self) -> usize {
        self.nulled.ncols()
    }

    #[inline]
    pub fn is_identity(&self) -> bool {
        self.nulled.ncols() == 0
    }

    /// Orthonormal basis of the nulled subspace (read-only view).
    #[inline]
    pub fn nulled_basis(&self) -> &DMatrix<Cplx<T>> {
        &self.nulled
    }

    /// `W v = v - U (U^H v)`.
    pub fn apply(&self, v: &DVector<Cplx<T>>) -> DVector<Cplx<T>> {
        if self.is_identity() {
            return v.clone();
        }
        let coeffs = self.nulled.adjoint() * v;
        v - &self.nulled * coeffs
    }

    /// `W R W^H` without materializing `W`.
    pub fn sandwich(&self, r: &DMatrix<Cplx<T>>) -> DMatrix<Cplx<T>> {
        if self.is_identity() {
            return r.clone();
        }
        let u = &self.nulled;
        let left = r - u * (u.adjoint() * r);
        &left - (&left * u) * u.adjoint()
    }

    /// Dense `M x M` projector matrix (tests and diagnostics).
    pub fn matrix(&self) -> DMatrix<Cplx<T>> {
        let eye = DMatrix::identity(self.dim, self.dim);
        if self.is_identity() {
            return eye;
        }
        eye - &self.nulled * self.nulled.adjoint()
    }
}

/// Projected MUSIC spectrum sampled on a range x angle grid. Values live in
/// `[0, 1]`; cells whose test vector is annihilated by the projector are
/// masked and carry value zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid<T: Scalar> {
    /// Ascending range axis, meters.
    pub range_axis: Vec<T>,
    /// Ascending angle axis, radians.
    pub angle_axis: Vec<T>,
    /// `range x angle` spectrum values.
    pub values: DMatrix<T>,
    /// Count of masked cells.
    pub masked: usize,
}

impl<T: Scalar> SpectrumGrid<T> {
    /// Strongest cell as `(range index, angle index, value)`; earliest index
    /// wins ties so the scan order is deterministic.
    pub fn peak(&self) -> (usize, usize, T) {
        let mut best = (0, 0, self.values[(0, 0)]);
        for a in 0..self.angle_axis.len() {
            for r in 0..self.range_axis.len() {
                let v = self.values[(r, a)];
                if v > best.2 {
                    best = (r, a, v);
                }
            }
        }
        best
    }
}

/// Evaluates `||E_s^H b||^2` with `b = W a(r, theta) / ||W a(r, theta)||`
/// over the grid. With `W = I` and a single path this is the signal-space
/// MUSIC spectrum: the classical form is the monotone map
/// `P_music = 1 / (M (1 - P))`, so peak positions coincide.
pub fn projected_spectrum<T: Scalar>(
    basis: &SubspaceBasis<T>,
    projector: &ZfProjector<T>,
    range_axis: &[T],
    angle_axis: &[T],
    geometry: &ArrayGeometry<T>,
) -> Result<SpectrumGrid<T>> {
    if range_axis.is_empty() || angle_axis.is_empty() {
        return Err(Error::Domain("spectrum grid axes must be nonempty".into()));
    }
    let m = geometry.num_elements;
    if basis.signal.nrows() != m || projector.ambient_dim() != m {
        return Err(Error::DimensionMismatch(
            "subspace/projector dimension does not match the array".into(),
        ));
    }
    let d = basis.signal_dim();
    let j = projector.nulled_dim();
    let m_t = T::from_f64_lossy(m as f64);
    let mask_level = T::from_f64_lossy(1e-12) * m_t;

    // E_s^H U, reused across cells: || E_s^H W a ||^2 expands to
    // || E_s^H a - (E_s^H U)(U^H a) ||^2 and || W a ||^2 = M - || U^H a ||^2.
    let cross = basis.signal.adjoint() * projector.nulled_basis();

    let columns: Vec<(Vec<T>, usize)> = angle_axis
        .par_iter()
        .map(|&theta| {
            let mut steering = vec![Complex::new(T::zero(), T::zero()); m];
            let mut u_coeff = vec![Complex::new(T::zero(), T::zero()); j];
            let mut masked = 0usize;
            let mut col = Vec::with_capacity(range_axis.len());
            for &range in range_axis {
                steering_into(geometry, range, theta, &mut steering);
                let mut u_norm2 = T::zero();
                for (jj, slot) in u_coeff.iter_mut().enumerate() {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    let basis_col = projector.nulled_basis().column(jj);
                    for i in 0..m {
                        acc += basis_col[i].conj() * steering[i];
                    }
                    u_norm2 += acc.norm_sqr();
                    *slot = acc;
                }
                let wa_norm2 = m_t - u_norm2;
                if wa_norm2 <= mask_level {
                    masked += 1;
                    col.push(T::zero());
                    continue;
                }
                let mut num = T::zero();
                for dd in 0..d {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    let sig_col = basis.signal.column(dd);
                    for i in 0..m {
                        acc += sig_col[i].conj() * steering[i];
                    }
                    for (jj, u) in u_coeff.iter().enumerate() {
                        acc -= cross[(dd, jj)] * u;
                    }
                    num += acc.norm_sqr();
                }
                col.push((num / wa_norm2).min(T::one()).max(T::zero()));
            }
            (col, masked)
        })
        .collect();

    let masked: usize = columns.iter().map(|(_, m)| m).sum();
    if masked == range_axis.len() * angle_axis.len() {
        return Err(Error::AllMasked);
    }
    let mut values = DMatrix::from_element(range_axis.len(), angle_axis.len(), T::zero());
    for (a, (col, _)) in columns.into_iter().enumerate() {
        for (r, v) in col.into_iter().enumerate() {
            values[(r, a)] = v;
        }
    }
    Ok(SpectrumGrid {
        range_axis: range_axis.to_vec(),
        angle_axis: angle_axis.to_vec(),
        values,
        masked,
    })
}

/// Search grid: linear in angle, logarithmic in range (near-field range
/// resolution falls off with distance), plus local refinement zooms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Scalar> {
    /// Angle window, radians (half-open upper edge).
    pub angle_min: T,
    pub angle_max: T,
    /// Coarse angle step, radians.
    pub angle_step: T,
    /// Range window, meters.
    pub range_min: T,
    pub range_max: T,
    /// Number of logarithmically spaced coarse range points.
    pub range_points: usize,
    /// Local refinement zoom levels around each accepted peak.
    pub refine_levels: usize,
    /// Grid shrink factor per refinement level.
    pub refine_factor: usize,
}

impl<T: Scalar> GridSpec<T> {
    /// Default search: angles `[-90, 90)` degrees in 0.5-degree steps, range
    /// `[1, 1.2 * max_range]` meters with 200 log-spaced points, two tenfold
    /// refinement levels.
    pub fn with_max_range(max_range: T) -> Self {
        Self {
            angle_min: -T::frac_pi_2(),
            angle_max: T::frac_pi_2(),
            angle_step: T::from_f64_lossy(0.5f64.to_radians()),
            range_min: T::one(),
            range_max: T::from_f64_lossy(1.2) * max_range,
            range_points: 200,
            refine_levels: 2,
            refine_factor: 10,
        }
    }

    pub fn angle_axis(&self) -> Vec<T> {
        let mut axis = Vec::new();
        let mut idx = 0usize;
        loop {
            let theta = self.angle_min + T::from_f64_lossy(idx as f64) * self.angle_step;
            if theta >= self.angle_max {
                break;
            }
            axis.push(theta);
            idx += 1;
        }
        axis
    }

    pub fn range_axis(&self) -> Vec<T> {
        let n = self.range_points.max(2);
        let log_lo = self.range_min.ln();
        let log_hi = self.range_max.ln();
        let step = (log_hi - log_lo) / T::from_f64_lossy((n - 1) as f64);
        (0..n)
            .map(|i| (log_lo + T::from_f64_lossy(i as f64) * step).exp())
            .collect()
    }
}

/// One detected scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererEstimate<T: Scalar> {
    /// Estimated range to the reference element, meters.
    pub range: T,
    /// Estimated angle, radians.
    pub angle: T,
    /// Spectrum value at the (refined) peak, in `[0, 1]`.
    pub score: T,
    /// 1-based detection order (strongest first).
    pub order: usize,
}

/// Knobs of the successive search.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicConfig<T: Scalar> {
    pub grid: GridSpec<T>,
    /// Detection threshold on the spectrum peak, in `(0, 1)`.
    pub peak_threshold: T,
    /// Hard cap on the number of detected paths.
    pub max_paths: usize,
    pub order_rule: ModelOrderRule,
    /// Keep the first iteration's coarse spectrum for dumping/plotting.
    pub capture_first_spectrum: bool,
}

impl<T: Scalar> MusicConfig<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        Self {
            grid,
            peak_threshold: T::from_f64_lossy(0.5),
            max_paths: 8,
            order_rule: ModelOrderRule::default(),
            capture_first_spectrum: false,
        }
    }
}

/// Why the successive search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Residual peak at or below the threshold.
    BelowThreshold,
    /// Path budget exhausted.
    MaxPaths,
    /// Newly accepted steering was dependent on an earlier one.
    DuplicateSteering,
}

/// Per-run search trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicDiagnostics<T: Scalar> {
    /// Coarse peak value of every iteration (including the final rejected one).
    pub iteration_peaks: Vec<T>,
    /// Signal-subspace dimension used in each iteration.
    pub model_orders: Vec<usize>,
    pub termination: Termination,
    /// First iteration's coarse spectrum, when capture was requested.
    pub first_spectrum: Option<SpectrumGrid<T>>,
}

/// Successive zero-forcing 2D-MUSIC over the covariance.
///
/// Each iteration splits the current (projected) covariance, evaluates the
/// projected spectrum on the coarse grid, and tests the global peak against
/// the threshold. Accepted peaks are refined on zoomed local grids, their
/// steering vectors join the zero-forcing set, and the covariance is
/// re-projected: `R_{l+1} = W R W^H` with `W = I - C (C^H C)^{-1} C^H`.
pub fn successive_zf_music<T: Scalar>(
    covariance: &CovarianceMatrix<T>,
    geometry: &ArrayGeometry<T>,
    config: &MusicConfig<T>,
) -> Result<(Vec<ScattererEstimate<T>>, MusicDiagnostics<T>)> {
    if config.peak_threshold <= T::zero() || config.peak_threshold >= T::one() {
        return Err(Error::Config("peak threshold must lie in (0, 1)".into()));
    }
    if config.max_paths >= geometry.num_elements {
        return Err(Error::Config(
            "path budget must stay below the element count".into(),
        ));
    }
    let range_axis = config.grid.range_axis();
    let angle_axis = config.grid.angle_axis();

    let mut estimates: Vec<ScattererEstimate<T>> = Vec::new();
    let mut steerings: Vec<DVector<Cplx<T>>> = Vec::new();
    let mut projector = ZfProjector::identity(geometry.num_elements);
    let mut projected = covariance.clone();
    let mut diagnostics = MusicDiagnostics {
        iteration_peaks: Vec::new(),
        model_orders: Vec::new(),
        termination: Termination::BelowThreshold,
        first_spectrum: None,
    };

    loop {
        let rule = iteration_rule(&config.order_rule, estimates.len());
        let basis = eig_split(&projected, &rule)?;
        diagnostics.model_orders.push(basis.signal_dim());
        if basis.signal_dim() == 0 {
            diagnostics.iteration_peaks.push(T::zero());
            diagnostics.termination = Termination::BelowThreshold;
            break;
        }

        let spectrum = match projected_spectrum(&basis, &projector, &range_axis, &angle_axis, geometry) {
            Ok(s) => s,
            Err(Error::AllMasked) => {
                diagnostics.iteration_peaks.push(T::zero());
                diagnostics.termination = Termination::BelowThreshold;
                break;
            }
            Err(e) => return Err(e),
        };
        let (ri, ai, peak) = spectrum.peak();
        diagnostics.iteration_peaks.push(peak);
        if estimates.is_empty() && config.capture_first_spectrum {
            diagnostics.first_spectrum = Some(spectrum.clone());
        }
        if peak <= config.peak_threshold {
            diagnostics.termination = Termination::BelowThreshold;
            break;
        }

        let (range, angle, score) = refine_peak(
            &basis,
            &projector,
            geometry,
            &config.grid,
            &range_axis,
            &angle_axis,
            ri,
            ai,
            peak,
        )?;

        let steering = crate::geometry::array_response(geometry, range, angle)?;
        steerings.push(steering);
        projector = match ZfProjector::nulling(&steerings) {
            Ok(p) => p,
            Err(Error::DuplicateSteering { .. }) => {
                diagnostics.termination = Termination::DuplicateSteering;
                break;
            }
            Err(e) => return Err(e),
        };
        estimates.push(ScattererEstimate {
            range,
            angle,
            score,
            order: estimates.len() + 1,
        });
        if estimates.len() >= config.max_paths {
            diagnostics.termination = Termination::MaxPaths;
            break;
        }
        projected = CovarianceMatrix {
            matrix: projector.sandwich(&covariance.matrix),
            num_snapshots: covariance.num_snapshots,
        };
    }

    Ok((estimates, diagnostics))
}

/// With a known source count, later iterations look for the remaining paths.
fn iteration_rule(rule: &ModelOrderRule, accepted: usize) -> ModelOrderRule {
    match *rule {
        ModelOrderRule::KnownCount { count } => ModelOrderRule::KnownCount {
            count: count.saturating_sub(accepted),
        },
        other => other,
    }
}

/// Zooms a local grid around a coarse peak: each level spans one parent step
/// in both coordinates and shrinks the step by `refine_factor`.
#[allow(clippy::too_many_arguments)]
fn refine_peak<T: Scalar>(
    basis: &SubspaceBasis<T>,
    projector: &ZfProjector<T>,
    geometry: &ArrayGeometry<T>,
    grid: &GridSpec<T>,
    range_axis: &[T],
    angle_axis: &[T],
    range_idx: usize,
    angle_idx: usize,
    coarse_value: T,
) -> Result<(T, T, T)> {
    let mut center_r = range_axis[range_idx];
    let mut center_a = angle_axis[angle_idx];
    let mut best = coarse_value;

    let mut span_r = if range_idx + 1 < range_axis.len() {
        range_axis[range_idx + 1] - range_axis[range_idx]
    } else {
        range_axis[range_idx] - range_axis[range_idx - 1]
    };
    let mut span_a = grid.angle_step;
    let factor = grid.refine_factor.max(2);
    let points = 2 * factor + 1;

    for _ in 0..grid.refine_levels {
        let r_lo = (center_r - span_r).max(T::from_f64_lossy(1e-3));
        let r_step = (center_r + span_r - r_lo) / T::from_f64_lossy((points - 1) as f64);
        let local_r: Vec<T> = (0..points)
            .map(|i| r_lo + T::from_f64_lossy(i as f64) * r_step)
            .collect();
        let a_lo = center_a - span_a;
        let a_step = (span_a + span_a) / T::from_f64_lossy((points - 1) as f64);
        let local_a: Vec<T> = (0..points)
            .map(|i| a_lo + T::from_f64_lossy(i as f64) * a_step)
            .collect();

        match projected_spectrum(basis, projector, &local_r, &local_a, geometry) {
            Ok(s) => {
                let (ri, ai, v) = s.peak();
                center_r = s.range_axis[ri];
                center_a = s.angle_axis[ai];
                best = v;
            }
            Err(Error::AllMasked) => break,
            Err(e) => return Err(e),
        }
        span_r /= T::from_f64_lossy(factor as f64);
        span_a /= T::from_f64_lossy(factor as f64);
    }
    Ok((center_r, center_a, best))
}
