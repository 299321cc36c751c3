//! Multipath channel compilation and synthesis of the noisy snapshot matrix.
//!
//! Each scatterer becomes one `PathState` (gain, total delay, Doppler,
//! steering vector). The received matrix stacks array snapshots column-wise:
//! column `k` is `sum_l a_l * alpha_l * s(k*T_s - tau_{s,l}) * exp(j*2*pi*f_{D,l}*k*T_s)`
//! plus circularly-symmetric Gaussian noise.
//!
//! Two synthesis routes are provided. `Exact` evaluates the continuous-time
//! reference waveform sample by sample (the oracle; O(N) per sample). `Fast`
//! applies the delay as a per-subcarrier phase ramp, runs one inverse FFT per
//! symbol, and places the samples into the delay-shifted symbol gates; it
//! reproduces the exact route everywhere up to rounding because delays stay
//! within the cyclic prefix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{array_response, path_params, ArrayGeometry, Scenario};
use crate::harness::seeding::{substream, StreamDomain};
use crate::scalar::{cis, Cplx, Scalar};
use crate::waveform::{evaluate_reference, SymbolGrid, WaveformConfig};

/// How complex path gains are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainPolicy {
    /// Unit amplitude, uniform phase (default; keeps received SNR unambiguous).
    Unit,
    /// Amplitude `1/(r_B * r_U)`, uniform phase, for distance-aware studies.
    InverseDistance,
}

impl Default for GainPolicy {
    fn default() -> Self {
        GainPolicy::Unit
    }
}

/// Synthesis route for the received matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMode {
    /// Literal per-sample evaluation of the reference waveform (slow oracle).
    Exact,
    /// Frequency-domain phase ramp + IFFT per symbol (default).
    Fast,
}

impl Default for SynthesisMode {
    fn default() -> Self {
        SynthesisMode::Fast
    }
}

/// Compiled state of one propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState<T: Scalar> {
    /// Complex gain `alpha`.
    pub gain: Cplx<T>,
    /// Delay seen by the BS, `tau + tau_d`, seconds.
    pub total_delay: T,
    /// Doppler shift, Hz.
    pub doppler: T,
    /// Near-field steering vector of the scatterer, length `M`.
    pub steering: DVector<Cplx<T>>,
}

/// `M x K` received sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix<T: Scalar> {
    pub data: DMatrix<Cplx<T>>,
    /// Sample rate `B` in Hz.
    pub sample_rate: T,
}

impl<T: Scalar> SnapshotMatrix<T> {
    #[inline]
    pub fn num_antennas(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Mean per-antenna per-sample power.
    pub fn mean_power(&self) -> T {
        let total = self
            .data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr());
        total / T::from_f64_lossy(self.data.len() as f64)
    }
}

/// Receiver noise description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T: Scalar> {
    /// Complex noise variance per antenna per sample, watts.
    pub variance: T,
    pub seed: u64,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn noiseless() -> Self {
        Self {
            variance: T::zero(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Number of snapshots covering the frame plus the longest delay tail:
/// `K = Gamma*(N+N_cp) + ceil(tau_max/T_s)`.
pub fn snapshot_count<T: Scalar>(config: &WaveformConfig<T>, max_total_delay: T) -> usize {
    let frame = config.num_symbols * config.samples_per_symbol();
    let tail = (max_total_delay / config.sample_interval())
        .ceil()
        .to_f64_lossy() as usize;
    frame + tail
}

/// Compiles the scenario into per-path channel states, enforcing the CP and
/// Doppler budgets the estimator relies on. Deterministic in `seed`.
pub fn compile_paths<T: Scalar>(
    scenario: &Scenario<T>,
    geometry: &ArrayGeometry<T>,
    config: &WaveformConfig<T>,
    policy: GainPolicy,
    seed: u64,
) -> Result<Vec<PathState<T>>> {
    if let Some(overrides) = &scenario.doppler_overrides {
        if overrides.len() != scenario.scatterers.len() {
            return Err(Error::Config(format!(
                "{} Doppler overrides for {} scatterers",
                overrides.len(),
                scenario.scatterers.len()
            )));
        }
    }
    let doppler_limit = config.subcarrier_spacing / T::from_f64_lossy(10.0);
    let mut rng = substream(seed, StreamDomain::PathGains, 0);
    let mut paths = Vec::with_capacity(scenario.scatterers.len());
    for (index, scatterer) in scenario.scatterers.iter().enumerate() {
        let params = path_params(geometry, scatterer, &scenario.ue, &scenario.clock);
        let doppler = scenario
            .doppler_overrides
            .as_ref()
            .map_or(params.doppler, |o| o[index]);
        if params.total_delay >= config.cp_duration {
            return Err(Error::InvalidPath {
                index,
                reason: format!(
                    "total delay {:.3e} s exceeds the cyclic prefix {:.3e} s",
                    params.total_delay.to_f64_lossy(),
                    config.cp_duration.to_f64_lossy()
                ),
            });
        }
        if doppler.magnitude() >= doppler_limit {
            return Err(Error::InvalidPath {
                index,
                reason: format!(
                    "Doppler {:.3e} Hz exceeds df/10 = {:.3e} Hz",
                    doppler.to_f64_lossy(),
                    doppler_limit.to_f64_lossy()
                ),
            });
        }
        let phase = T::from_f64_lossy(rng.gen_range(0.0..std::f64::consts::TAU));
        let amplitude = match policy {
            GainPolicy::Unit => T::one(),
            GainPolicy::InverseDistance => {
                if params.range_to_ue <= T::zero() {
                    return Err(Error::InvalidPath {
                        index,
                        reason: "inverse-distance gain undefined for zero UE range".into(),
                    });
                }
                T::one() / (scatterer.range_to_bs * params.range_to_ue)
            }
        };
        paths.push(PathState {
            gain: cis(phase) * amplitude,
            total_delay: params.total_delay,
            doppler,
            steering: array_response(geometry, scatterer.range_to_bs, scatterer.angle)?,
        });
    }
    Ok(paths)
}

/// Synthesizes the received snapshot matrix for the compiled paths.
/// `num_antennas` fixes `M` (validated against every steering vector), which
/// keeps the path-free noise-only case well defined.
pub fn synthesize_received<T: Scalar>(
    paths: &[PathState<T>],
    symbols: &SymbolGrid<T>,
    config: &WaveformConfig<T>,
    noise: &NoiseModel<T>,
    mode: SynthesisMode,
    num_antennas: usize,
) -> Result<SnapshotMatrix<T>> {
    if num_antennas == 0 {
        return Err(Error::DimensionMismatch("need at least one antenna".into()));
    }
    for (l, path) in paths.iter().enumerate() {
        if path.steering.len() != num_antennas {
            return Err(Error::DimensionMismatch(format!(
                "path {l} steering has {} entries, expected {num_antennas}",
                path.steering.len()
            )));
        }
    }
    if symbols.num_subcarriers() != config.num_subcarriers
        || symbols.num_symbols() != config.num_symbols
    {
        return Err(Error::DimensionMismatch(
            "symbol grid does not match waveform config".into(),
        ));
    }
    let max_delay = paths
        .iter()
        .map(|p| p.total_delay)
        .fold(T::zero(), |a, b| a.max(b));
    let k_total = snapshot_count(config, max_delay);
    let mut data = DMatrix::from_element(
        num_antennas,
        k_total,
        Complex::new(T::zero(), T::zero()),
    );

    match mode {
        SynthesisMode::Fast => {
            for path in paths {
                add_path_fast(&mut data, path, symbols, config);
            }
        }
        SynthesisMode::Exact => {
            let ts = config.sample_interval();
            for path in paths {
                let omega = T::two_pi() * path.doppler * ts;
                for k in 0..k_total {
                    let t = T::from_f64_lossy(k as f64) * ts;
                    let s = evaluate_reference(symbols, config, t - path.total_delay)?;
                    if s.norm_sqr() == T::zero() {
                        continue;
                    }
                    let value = s * path.gain * cis(omega * T::from_f64_lossy(k as f64));
                    let mut col = data.column_mut(k);
                    for (i, a) in path.steering.iter().enumerate() {
                        col[i] += a * value;
                    }
                }
            }
        }
    }

    let mut snapshots = SnapshotMatrix {
        data,
        sample_rate: config.bandwidth(),
    };
    add_noise(&mut snapshots, noise);
    Ok(snapshots)
}

/// Adds circularly-symmetric complex Gaussian noise of the model's variance
/// to every entry, in a fixed column-major draw order.
pub fn add_noise<T: Scalar>(snapshots: &mut SnapshotMatrix<T>, noise: &NoiseModel<T>) {
    if noise.variance <= T::zero() {
        return;
    }
    let mut rng = substream(noise.seed, StreamDomain::Noise, 0);
    let std = (noise.variance / T::from_f64_lossy(2.0)).sqrt();
    let rows = snapshots.data.nrows();
    for k in 0..snapshots.data.ncols() {
        let mut col = snapshots.data.column_mut(k);
        for i in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            col[i] += Complex::new(T::from_f64_lossy(re) * std, T::from_f64_lossy(im) * std);
        }
    }
}

/// Delay as a subcarrier phase ramp, one inverse FFT per symbol, samples
/// placed into the delay-shifted half-open symbol gates. Exact because the
/// per-symbol time series is periodic with period `N` samples.
fn add_path_fast<T: Scalar>(
    data: &mut DMatrix<Cplx<T>>,
    path: &PathState<T>,
    symbols: &SymbolGrid<T>,
    config: &WaveformConfig<T>,
) {
    let n = config.num_subcarriers;
    let n_cp = config.cp_samples();
    let sps = n + n_cp;
    let k_total = data.ncols();
    let ts = config.sample_interval();

    // Delay in samples; snapped to the nearest integer when within rounding
    // noise so that gate membership is decided consistently.
    let mut delay_samples = path.total_delay / ts;
    let snap_tol = T::default_epsilon()
        * T::from_f64_lossy(32.0)
        * T::one().max(delay_samples.magnitude());
    if (delay_samples - delay_samples.round()).magnitude() <= snap_tol {
        delay_samples = delay_samples.round();
    }
    let delay_f = delay_samples.to_f64_lossy();

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let ramp_base = -T::two_pi() * config.subcarrier_spacing * path.total_delay;
    let omega_doppler = T::two_pi() * path.doppler * ts;

    let mut time = vec![Complex::new(T::zero(), T::zero()); n];
    for gamma in 0..config.num_symbols {
        for (idx, slot) in time.iter_mut().enumerate() {
            *slot = symbols.data[(idx, gamma)] * cis(T::from_f64_lossy(idx as f64) * ramp_base);
        }
        ifft.process(&mut time);

        let gate_start = (gamma * sps) as f64 + delay_f;
        let gate_end = gate_start + sps as f64;
        let k_lo = gate_start.ceil().max(0.0) as usize;
        let k_hi = (gate_end.ceil() as usize).min(k_total);
        let phase_ref = gamma * sps + n_cp; // sample index where subcarrier phases align
        for k in k_lo..k_hi {
            let offset = (k + n * (2 + sps / n)).wrapping_sub(phase_ref) % n;
            let value =
                time[offset] * path.gain * cis(omega_doppler * T::from_f64_lossy(k as f64));
            let mut col = data.column_mut(k);
            for (i, a) in path.steering.iter().enumerate() {
                col[i] += a * value;
            }
        }
    }
}

/// Calibrates the complex noise variance so the noiseless aggregate received
/// signal sits `target_snr_db` above the noise, measured per antenna per
/// sample on the synthesized frame.
pub fn calibrate_noise<T: Scalar>(
    target_snr_db: T,
    paths: &[PathState<T>],
    symbols: &SymbolGrid<T>,
    config: &WaveformConfig<T>,
) -> Result<NoiseModel<T>> {
    if paths.is_empty() {
        return Err(Error::Domain(
            "noise calibration needs at least one path".into(),
        ));
    }
    let clean = synthesize_received(
        paths,
        symbols,
        config,
        &NoiseModel::noiseless(),
        SynthesisMode::Fast,
        paths[0].steering.len(),
    )?;
    noise_for_power(target_snr_db, clean.mean_power())
}

/// Noise variance for a measured mean signal power at the requested SNR.
pub fn noise_for_power<T: Scalar>(target_snr_db: T, mean_power: T) -> Result<NoiseModel<T>> {
    if mean_power <= T::zero() {
        return Err(Error::Domain(
            "cannot calibrate noise against a zero-power signal".into(),
        ));
    }
    let ratio = T::from_f64_lossy(10.0).powf(target_snr_db / T::from_f64_lossy(10.0));
    Ok(NoiseModel {
        variance: mean_power / ratio,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClockModel, Position2D, Scatterer, UeState};
    use crate::waveform::{generate_symbols, Modulation};
    use approx::assert_relative_eq;

    fn small_config() -> WaveformConfig<f64> {
        // CP of 80 samples = 200 ns: room for the ~150 ns scene delays.
        let bw: f64 = 400e6;
        WaveformConfig::new(64, bw / 64.0, 2, 80.0 / bw, 1.0, Modulation::Qpsk).unwrap()
    }

    fn table1_far() -> Vec<Scatterer<f64>> {
        [
            (26.6, 11.0),
            (5.7, -23.0),
            (23.0, 57.0),
            (17.8, -16.0),
            (15.4, -6.0),
        ]
        .iter()
        .map(|&(r, deg): &(f64, f64)| Scatterer::new(r, deg.to_radians()).unwrap())
        .collect()
    }

    fn ue() -> UeState<f64> {
        UeState {
            position: Position2D::new(15.0 * 3f64.sqrt(), 15.0),
            velocity: [0.0, 10.0],
        }
    }

    #[test]
    fn far_scenario_fits_inside_full_profile_cp() {
        let bw: f64 = 400e6;
        let config =
            WaveformConfig::new(1024, bw / 1024.0, 1, 256.0 / bw, 1.0, Modulation::Qpsk).unwrap();
        let geometry = ArrayGeometry::half_wavelength(16, 28e9).unwrap();
        let scenario = Scenario {
            scatterers: table1_far(),
            ue: ue(),
            clock: ClockModel::new(0.1e-6).unwrap(),
            doppler_overrides: None,
        };
        let paths =
            compile_paths(&scenario, &geometry, &config, GainPolicy::Unit, 4).unwrap();
        assert_eq!(paths.len(), 5);
        for p in &paths {
            assert!(p.total_delay < config.cp_duration);
            assert_relative_eq!(p.gain.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn distant_scatterer_overflows_cp() {
        let config = small_config();
        let geometry = ArrayGeometry::half_wavelength(8, 28e9).unwrap();
        let scenario = Scenario {
            scatterers: vec![Scatterer::new(200.0, 0.0).unwrap()],
            ue: UeState::stationary(Position2D::new(10.0, 0.0)),
            clock: ClockModel::synchronized(),
            doppler_overrides: None,
        };
        let err = compile_paths(&scenario, &geometry, &config, GainPolicy::Unit, 0)
            .expect_err("delay beyond CP");
        assert!(matches!(err, Error::InvalidPath { index: 0, .. }));
    }

    #[test]
    fn doppler_override_beyond_budget_is_rejected() {
        let config = small_config();
        let geometry = ArrayGeometry::half_wavelength(8, 28e9).unwrap();
        let scenario = Scenario {
            scatterers: vec![Scatterer::new(5.0, 0.2).unwrap()],
            ue: UeState::stationary(Position2D::new(8.0, 1.0)),
            clock: ClockModel::synchronized(),
            doppler_overrides: Some(vec![config.subcarrier_spacing / 5.0]),
        };
        let err = compile_paths(&scenario, &geometry, &config, GainPolicy::Unit, 0)
            .expect_err("doppler beyond df/10");
        assert!(matches!(err, Error::InvalidPath { index: 0, .. }));
    }

    #[test]
    fn zero_paths_synthesize_pure_noise() {
        let config = small_config();
        let symbols = generate_symbols(&config, 11);
        let noise = NoiseModel {
            variance: 0.3,
            seed: 9,
        };
        let y = synthesize_received(&[], &symbols, &config, &noise, SynthesisMode::Fast, 6)
            .unwrap();
        assert_eq!(y.num_antennas(), 6);
        assert_eq!(y.num_snapshots(), 2 * config.samples_per_symbol());
        let measured = y.mean_power();
        assert!((measured - 0.3).abs() / 0.3 < 0.1, "variance {measured}");
    }

    fn compiled_paths(
        config: &WaveformConfig<f64>,
        m: usize,
        scatterers: Vec<Scatterer<f64>>,
    ) -> Vec<PathState<f64>> {
        let geometry = ArrayGeometry::half_wavelength(m, 28e9).unwrap();
        let scenario = Scenario {
            scatterers,
            ue: ue(),
            clock: ClockModel::new(0.02e-6).unwrap(),
            doppler_overrides: None,
        };
        compile_paths(&scenario, &geometry, config, GainPolicy::Unit, 5).unwrap()
    }

    #[test]
    fn noiseless_matrix_has_rank_at_most_path_count() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let paths = compiled_paths(&config, 12, table1_far());
        let y = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            12,
        )
        .unwrap();
        let svd = y.data.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[5] <= 1e-9 * sv[0], "rank leak: {:?}", &sv[..7.min(sv.len())]);
    }

    #[test]
    fn noiseless_matrix_lies_in_steering_span() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let paths = compiled_paths(&config, 12, table1_far());
        let y = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            12,
        )
        .unwrap();
        let a = DMatrix::from_columns(
            &paths.iter().map(|p| p.steering.clone()).collect::<Vec<_>>(),
        );
        let svd = a.svd(true, false);
        let u = svd.u.as_ref().unwrap();
        let residual = &y.data - u * (u.adjoint() * &y.data);
        assert!(residual.norm() <= 1e-9 * y.data.norm());
    }

    #[test]
    fn fast_and_exact_modes_agree() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let paths = compiled_paths(
            &config,
            8,
            vec![
                Scatterer::new(6.0, 0.3).unwrap(),
                Scatterer::new(14.0, -0.5).unwrap(),
            ],
        );
        let fast = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            8,
        )
        .unwrap();
        let exact = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Exact,
            8,
        )
        .unwrap();
        let scale = exact.data.norm() / (exact.data.len() as f64).sqrt();
        for (f, e) in fast.data.iter().zip(exact.data.iter()) {
            assert!((f - e).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn scaling_gains_scales_clean_signal_linearly() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let mut paths = compiled_paths(&config, 8, vec![Scatterer::new(6.0, 0.3).unwrap()]);
        let base = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            8,
        )
        .unwrap();
        for p in &mut paths {
            p.gain *= 2.0;
        }
        let doubled = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            8,
        )
        .unwrap();
        let diff = &doubled.data - &base.data * Complex::new(2.0, 0.0);
        assert!(diff.norm() <= 1e-12 * base.data.norm());
    }

    #[test]
    fn synthesis_is_bit_reproducible() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let paths = compiled_paths(&config, 8, vec![Scatterer::new(6.0, 0.3).unwrap()]);
        let noise = NoiseModel {
            variance: 0.05,
            seed: 123,
        };
        let a = synthesize_received(&paths, &symbols, &config, &noise, SynthesisMode::Fast, 8)
            .unwrap();
        let b = synthesize_received(&paths, &symbols, &config, &noise, SynthesisMode::Fast, 8)
            .unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn noise_calibration_follows_the_log_law() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let paths = compiled_paths(&config, 8, vec![Scatterer::new(6.0, 0.3).unwrap()]);
        let at_zero = calibrate_noise(0.0, &paths, &symbols, &config).unwrap();
        let at_ten = calibrate_noise(10.0, &paths, &symbols, &config).unwrap();
        let clean = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            8,
        )
        .unwrap();
        assert_relative_eq!(at_zero.variance, clean.mean_power(), epsilon = 1e-12);
        assert_relative_eq!(at_zero.variance / at_ten.variance, 10.0, epsilon = 1e-9);

        // Sweep endpoints used in the experiments: -10 dB to 20 dB is 30 dB.
        let lo = calibrate_noise(-10.0, &paths, &symbols, &config).unwrap();
        let hi = calibrate_noise(20.0, &paths, &symbols, &config).unwrap();
        assert_relative_eq!(lo.variance / hi.variance, 1e3, epsilon = 1e-6 * 1e3);
    }

    #[test]
    fn mismatched_steering_length_is_rejected() {
        let config = small_config();
        let symbols = generate_symbols(&config, 3);
        let paths = compiled_paths(&config, 8, vec![Scatterer::new(6.0, 0.3).unwrap()]);
        let err = synthesize_received(
            &paths,
            &symbols,
            &config,
            &NoiseModel::noiseless(),
            SynthesisMode::Fast,
            16,
        )
        .expect_err("antenna count mismatch");
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }
}
