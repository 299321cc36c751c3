//! Per-path delay recovery from an isolated stream: OFDM demodulation,
//! element-wise symbol division, and a windowed periodogram across
//! subcarriers averaged non-coherently over symbols.
//!
//! Doppler is deliberately not estimated: each OFDM symbol contributes the
//! magnitude of its subcarrier sum, so the per-symbol Doppler phase drops
//! out and only the delay slope `exp(-j*2*pi*n*df*tau)` across subcarriers
//! determines the peak bin.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::isolation::IsolatedStream;
use crate::scalar::{Cplx, Scalar};
use crate::waveform::{SymbolGrid, WaveformConfig};

/// `N x Gamma` subcarrier-domain matrix after demodulation and equalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveGrid<T: Scalar> {
    pub data: nalgebra::DMatrix<Cplx<T>>,
    /// Subcarrier spacing the grid was demodulated with, Hz.
    pub subcarrier_spacing: T,
}

/// Window applied across subcarriers before the periodogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// No tapering; exact peaks for on-grid delays.
    Rectangular,
    /// Hamming taper, first sidelobe near -43 dB (default).
    Hamming,
}

impl Default for WindowKind {
    fn default() -> Self {
        WindowKind::Hamming
    }
}

impl WindowKind {
    pub fn coefficients<T: Scalar>(self, len: usize) -> Vec<T> {
        match self {
            WindowKind::Rectangular => vec![T::one(); len],
            WindowKind::Hamming => {
                if len == 1 {
                    return vec![T::one()];
                }
                let denom = T::from_f64_lossy((len - 1) as f64);
                (0..len)
                    .map(|n| {
                        let x = T::two_pi() * T::from_f64_lossy(n as f64) / denom;
                        T::from_f64_lossy(0.54) - T::from_f64_lossy(0.46) * x.cos()
                    })
                    .collect()
            }
        }
    }
}

/// Delay spectrum `Per[k]` with its bin width in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram<T: Scalar> {
    pub values: Vec<T>,
    /// Seconds per bin, `1/(N_per * df)`.
    pub bin_seconds: T,
    pub window: WindowKind,
}

/// Demodulates the first `Gamma` complete OFDM symbols of the stream: per
/// symbol, drop the prefix, forward-DFT the `N` remaining samples (scaled by
/// `1/N`), then divide out the known data symbols. Any trailing delay tail
/// of the stream is ignored.
pub fn demodulate_equalize<T: Scalar>(
    stream: &IsolatedStream<T>,
    symbols: &SymbolGrid<T>,
    config: &WaveformConfig<T>,
) -> Result<ReceiveGrid<T>> {
    let n = config.num_subcarriers;
    let n_cp = config.cp_samples();
    let sps = n + n_cp;
    let needed = config.num_symbols * sps;
    if stream.samples.len() < needed {
        return Err(Error::DimensionMismatch(format!(
            "stream has {} samples, demodulation needs {needed}",
            stream.samples.len()
        )));
    }
    if symbols.num_subcarriers() != n || symbols.num_symbols() != config.num_symbols {
        return Err(Error::DimensionMismatch(
            "symbol grid does not match waveform config".into(),
        ));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let inv_n = T::one() / T::from_f64_lossy(n as f64);
    let mut data = nalgebra::DMatrix::from_element(
        n,
        config.num_symbols,
        Complex::new(T::zero(), T::zero()),
    );
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for gamma in 0..config.num_symbols {
        let start = gamma * sps + n_cp;
        buf.copy_from_slice(&stream.samples[start..start + n]);
        fft.process(&mut buf);
        for (idx, value) in buf.iter().enumerate() {
            let b = symbols.data[(idx, gamma)];
            if b.norm_sqr() == T::zero() {
                return Err(Error::Domain(format!(
                    "data symbol ({idx}, {gamma}) is zero; cannot equalize"
                )));
            }
            data[(idx, gamma)] = value * inv_n / b;
        }
    }
    Ok(ReceiveGrid {
        data,
        subcarrier_spacing: config.subcarrier_spacing,
    })
}

/// Windowed periodogram across subcarriers, averaged over symbols:
/// `Per[k] = (1/(N*Gamma)) * sum_gamma |sum_n F[n,gamma] w[n] e^{j2 pi k n / N_per}|^2`,
/// evaluated as zero-padded unnormalized inverse FFTs of length `n_per`.
pub fn periodogram<T: Scalar>(
    grid: &ReceiveGrid<T>,
    window: WindowKind,
    n_per: usize,
) -> Result<Periodogram<T>> {
    let n = grid.data.nrows();
    let num_symbols = grid.data.ncols();
    if n_per < n {
        return Err(Error::Config(format!(
            "periodogram length {n_per} shorter than subcarrier count {n}"
        )));
    }
    let coeffs = window.coefficients::<T>(n);
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n_per);
    let mut acc = vec![T::zero(); n_per];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_per];
    for gamma in 0..num_symbols {
        for slot in buf.iter_mut() {
            *slot = Complex::new(T::zero(), T::zero());
        }
        for idx in 0..n {
            buf[idx] = grid.data[(idx, gamma)] * coeffs[idx];
        }
        ifft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(buf.iter()) {
            *a += v.norm_sqr();
        }
    }
    let scale = T::one() / T::from_f64_lossy((n * num_symbols) as f64);
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(Periodogram {
        values: acc,
        bin_seconds: T::one()
            / (T::from_f64_lossy(n_per as f64) * grid.subcarrier_spacing),
        window,
    })
}

/// Reads the delay off the periodogram peak, `tau = k_hat * bin_seconds`.
/// With interpolation enabled a three-point parabola in log power refines
/// the peak to sub-bin accuracy (the spectrum is treated as circular).
pub fn estimate_delay<T: Scalar>(per: &Periodogram<T>, interpolate: bool) -> Result<T> {
    if per.values.is_empty() {
        return Err(Error::Domain("periodogram is empty".into()));
    }
    let n = per.values.len();
    let mut k_hat = 0usize;
    for (k, v) in per.values.iter().enumerate() {
        if *v > per.values[k_hat] {
            k_hat = k;
        }
    }
    let mut position = T::from_f64_lossy(k_hat as f64);
    if interpolate && n >= 3 {
        let left = per.values[(k_hat + n - 1) % n];
        let center = per.values[k_hat];
        let right = per.values[(k_hat + 1) % n];
        if left > T::zero() && center > T::zero() && right > T::zero() {
            let (ll, lc, lr) = (left.ln(), center.ln(), right.ln());
            let denom = ll - lc - lc + lr;
            if denom < T::zero() {
                let offset = T::from_f64_lossy(0.5) * (ll - lr) / denom;
                let half = T::from_f64_lossy(0.5);
                position += offset.max(-half).min(half);
            }
        }
    }
    Ok(position * per.bin_seconds)
}
