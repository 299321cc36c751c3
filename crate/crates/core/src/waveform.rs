//! OFDM transmit waveform: i.i.d. data symbols, the sampled baseband frame,
//! and a slow direct evaluation of the continuous-time signal used as the
//! oracle for the fast modulator.
//!
//! The frame follows the double-sum model: subcarrier `n` of symbol `gamma`
//! carries `b_{n,gamma} * exp(j*2*pi*n*df*(t - gamma*T_O - T_CP))` inside the
//! half-open gate `[gamma*T_O, (gamma+1)*T_O)`, with `T_O = T_CP + 1/df`.
//! Sampling at `T_s = 1/B` with `B = N*df` turns each symbol into an
//! unnormalized inverse DFT preceded by its cyclic prefix.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::harness::seeding::{substream, StreamDomain};
use crate::scalar::{cis, Cplx, Scalar};

/// Constellation used for the data symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// Constant-modulus quadrature phase shift keying (default).
    Qpsk,
    /// 16-point quadrature amplitude modulation.
    Qam16,
}

impl Default for Modulation {
    fn default() -> Self {
        Modulation::Qpsk
    }
}

/// OFDM numerology and power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformConfig<T: Scalar> {
    /// Subcarrier count `N` (a power of two).
    pub num_subcarriers: usize,
    /// Subcarrier spacing `df` in Hz.
    pub subcarrier_spacing: T,
    /// OFDM symbol count `Gamma` per frame.
    pub num_symbols: usize,
    /// Cyclic prefix duration `T_CP` in seconds; `T_CP * B` must be integer.
    pub cp_duration: T,
    /// Transmit power `P` (normalized watts); `E{|b|^2} = P/N`.
    pub power: T,
    pub modulation: Modulation,
}

impl<T: Scalar> WaveformConfig<T> {
    pub fn new(
        num_subcarriers: usize,
        subcarrier_spacing: T,
        num_symbols: usize,
        cp_duration: T,
        power: T,
        modulation: Modulation,
    ) -> Result<Self> {
        if num_subcarriers == 0 || !num_subcarriers.is_power_of_two() {
            return Err(Error::Config(format!(
                "subcarrier count must be a power of two, got {num_subcarriers}"
            )));
        }
        if subcarrier_spacing <= T::zero() {
            return Err(Error::Config("subcarrier spacing must be positive".into()));
        }
        if num_symbols == 0 {
            return Err(Error::Config("need at least one OFDM symbol".into()));
        }
        if cp_duration <= T::zero() {
            return Err(Error::Config("cyclic prefix duration must be positive".into()));
        }
        if power <= T::zero() {
            return Err(Error::Config("transmit power must be positive".into()));
        }
        let config = Self {
            num_subcarriers,
            subcarrier_spacing,
            num_symbols,
            cp_duration,
            power,
            modulation,
        };
        let n_cp = config.cp_duration * config.bandwidth();
        let rounded = n_cp.round();
        if (n_cp - rounded).magnitude() > T::from_f64_lossy(1e-6) || rounded < T::one() {
            return Err(Error::Config(
                "cyclic prefix duration times bandwidth must be a positive integer".into(),
            ));
        }
        Ok(config)
    }

    /// Signal bandwidth `B = N*df` in Hz.
    #[inline]
    pub fn bandwidth(&self) -> T {
        T::from_f64_lossy(self.num_subcarriers as f64) * self.subcarrier_spacing
    }

    /// Sample interval `T_s = 1/B` in seconds.
    #[inline]
    pub fn sample_interval(&self) -> T {
        T::one() / self.bandwidth()
    }

    /// Cyclic prefix length in samples.
    #[inline]
    pub fn cp_samples(&self) -> usize {
        (self.cp_duration * self.bandwidth())
            .round()
            .to_f64_lossy() as usize
    }

    /// OFDM symbol duration including the prefix, `T_O = T_CP + 1/df`.
    #[inline]
    pub fn symbol_duration(&self) -> T {
        self.cp_duration + T::one() / self.subcarrier_spacing
    }

    /// Samples per OFDM symbol including the prefix.
    #[inline]
    pub fn samples_per_symbol(&self) -> usize {
        self.num_subcarriers + self.cp_samples()
    }

    /// Total frame duration `Gamma * T_O` in seconds.
    #[inline]
    pub fn frame_duration(&self) -> T {
        T::from_f64_lossy(self.num_symbols as f64) * self.symbol_duration()
    }

    /// Per-symbol mean power target `P/N`.
    #[inline]
    pub fn symbol_power(&self) -> T {
        self.power / T::from_f64_lossy(self.num_subcarriers as f64)
    }
}

/// `N x Gamma` matrix of data symbols; column `gamma` holds one OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid<T: Scalar> {
    pub data: DMatrix<Cplx<T>>,
}

impl<T: Scalar> SymbolGrid<T> {
    #[inline]
    pub fn num_subcarriers(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn num_symbols(&self) -> usize {
        self.data.ncols()
    }
}

/// Draws the i.i.d. symbol grid for one frame. Deterministic in `seed`; the
/// constellation points are scaled so every draw satisfies `E{|b|^2} = P/N`
/// (QPSK is exactly constant-modulus at `sqrt(P/N)`).
pub fn generate_symbols<T: Scalar>(config: &WaveformConfig<T>, seed: u64) -> SymbolGrid<T> {
    let mut rng = substream(seed, StreamDomain::Symbols, 0);
    let n = config.num_subcarriers;
    let gamma = config.num_symbols;
    let amp = config.symbol_power().sqrt();
    let data = match config.modulation {
        Modulation::Qpsk => {
            let scale = amp / T::from_f64_lossy(std::f64::consts::SQRT_2);
            DMatrix::from_fn(n, gamma, |_, _| {
                let bits: u8 = rng.gen_range(0..4);
                let re = if bits & 1 == 0 { T::one() } else { -T::one() };
                let im = if bits & 2 == 0 { T::one() } else { -T::one() };
                Complex::new(re * scale, im * scale)
            })
        }
        Modulation::Qam16 => {
            // Levels {-3,-1,1,3}/sqrt(10) have unit mean square.
            let scale = amp / T::from_f64_lossy(10f64.sqrt());
            let level = |idx: u8| T::from_f64_lossy([-3.0, -1.0, 1.0, 3.0][idx as usize]);
            DMatrix::from_fn(n, gamma, |_, _| {
                let bits: u8 = rng.gen_range(0..16);
                Complex::new(level(bits & 3) * scale, level(bits >> 2) * scale)
            })
        }
    };
    SymbolGrid { data }
}

/// Sampled baseband frame: per symbol, the unnormalized inverse DFT of its
/// subcarrier column prefixed by the last `N_cp` time samples, concatenated
/// over symbols. Matches the continuous-time signal at `t = k*T_s`.
pub fn modulate_frame<T: Scalar>(
    symbols: &SymbolGrid<T>,
    config: &WaveformConfig<T>,
) -> Result<Vec<Cplx<T>>> {
    if symbols.num_subcarriers() != config.num_subcarriers
        || symbols.num_symbols() != config.num_symbols
    {
        return Err(Error::DimensionMismatch(format!(
            "symbol grid is {}x{}, config expects {}x{}",
            symbols.num_subcarriers(),
            symbols.num_symbols(),
            config.num_subcarriers,
            config.num_symbols
        )));
    }
    let n = config.num_subcarriers;
    let n_cp = config.cp_samples();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut frame = Vec::with_capacity(config.num_symbols * (n + n_cp));
    let mut time = vec![Complex::new(T::zero(), T::zero()); n];
    for gamma in 0..config.num_symbols {
        time.copy_from_slice(symbols.data.column(gamma).as_slice());
        ifft.process(&mut time);
        frame.extend_from_slice(&time[n - n_cp..]);
        frame.extend_from_slice(&time);
    }
    Ok(frame)
}

/// Direct evaluation of the transmit signal at an arbitrary instant, summing
/// the `N` subcarrier exponentials of the symbol whose gate contains `t`.
/// Returns zero outside every gate (before the frame or after it ends).
pub fn evaluate_reference<T: Scalar>(
    symbols: &SymbolGrid<T>,
    config: &WaveformConfig<T>,
    t: T,
) -> Result<Cplx<T>> {
    if !t.is_finite() {
        return Err(Error::Domain("time instant must be finite".into()));
    }
    let zero = Complex::new(T::zero(), T::zero());
    if t < T::zero() || t >= config.frame_duration() {
        return Ok(zero);
    }
    let t_sym = config.symbol_duration();
    let mut gamma = (t / t_sym).floor().to_f64_lossy() as usize;
    if gamma >= config.num_symbols {
        gamma = config.num_symbols - 1; // guard the floor against roundoff at the top edge
    }
    let local = t - T::from_f64_lossy(gamma as f64) * t_sym - config.cp_duration;
    let base = T::two_pi() * config.subcarrier_spacing * local;
    let mut acc = zero;
    for n in 0..config.num_subcarriers {
        acc += symbols.data[(n, gamma)] * cis(T::from_f64_lossy(n as f64) * base);
    }
    Ok(acc)
}

/// Fraction of the symbol drawn with sample statistics close to the target:
/// convenience used by tests and the harness sanity checks.
pub fn mean_symbol_power<T: Scalar>(symbols: &SymbolGrid<T>) -> T {
    let total: T = symbols
        .data
        .iter()
        .fold(T::zero(), |acc, z| acc + z.norm_sqr());
    total / T::from_f64_lossy((symbols.data.len()) as f64)
}
