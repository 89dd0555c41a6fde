//! LoRa chirp synthesis and the dechirp/DFT demodulation primitives.
//!
//! A symbol with index `s` out of `N = 2^SF` is a linear upchirp whose
//! starting frequency is cyclically shifted by `s` frequency steps. At
//! critical sampling (one sample per chip) the phase is
//!
//! ```text
//! phi_s[n] = (2*pi/N) * (n^2/2 + (s - N/2)*n)
//! ```
//!
//! For oversampled synthesis the instantaneous frequency must stay inside
//! [-B/2, B/2), which requires an explicit fold of the frequency ramp at the
//! point where the shifted chirp wraps; at critical sampling the fold term is
//! an integer number of cycles and disappears.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{ChirpError, Result};

/// Smallest supported spreading factor. Commercial LoRa uses 7..=12; small
/// factors are allowed so that exhaustive properties stay cheap to test.
pub const MIN_SF: u32 = 2;
/// Largest supported spreading factor.
pub const MAX_SF: u32 = 12;

/// Parameters of one LoRa signal: spreading factor, bandwidth, and the
/// receiver oversampling factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoraConfig {
    sf: u32,
    bandwidth_hz: f64,
    oversample: usize,
}

impl LoraConfig {
    /// Validates and builds a configuration.
    ///
    /// `sf` must lie in [`MIN_SF`]..=[`MAX_SF`], `bandwidth_hz` must be
    /// positive and finite, and `oversample` must be at least 1.
    pub fn new(sf: u32, bandwidth_hz: f64, oversample: usize) -> Result<Self> {
        if !(MIN_SF..=MAX_SF).contains(&sf) {
            return Err(ChirpError::InvalidConfig(format!(
                "spreading factor {sf} outside {MIN_SF}..={MAX_SF}"
            )));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(ChirpError::InvalidConfig(format!(
                "bandwidth {bandwidth_hz} Hz must be positive and finite"
            )));
        }
        if oversample == 0 {
            return Err(ChirpError::InvalidConfig(
                "oversampling factor must be at least 1".into(),
            ));
        }
        Ok(Self { sf, bandwidth_hz, oversample })
    }

    /// Spreading factor.
    pub fn sf(&self) -> u32 {
        self.sf
    }

    /// Bandwidth B in hertz.
    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Oversampling factor beta.
    pub fn oversample(&self) -> usize {
        self.oversample
    }

    /// Chips per symbol, `N = 2^SF`; also the sample count at critical rate.
    pub fn n(&self) -> usize {
        1usize << self.sf
    }

    /// Samples per symbol at the oversampled rate, `beta * N`.
    pub fn total_samples(&self) -> usize {
        self.n() * self.oversample
    }

    /// Sample rate in hertz, `beta * B`.
    pub fn sample_rate(&self) -> f64 {
        self.bandwidth_hz * self.oversample as f64
    }

    /// The same configuration at critical sampling (beta = 1).
    pub fn critical(&self) -> Self {
        Self { oversample: 1, ..*self }
    }
}

/// A buffer of complex baseband samples tagged with its oversampling factor.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    /// Complex baseband samples.
    pub samples: Vec<Complex64>,
    /// Oversampling factor relative to the signal bandwidth.
    pub oversample: usize,
}

impl IqBuffer {
    /// Wraps samples with their oversampling tag.
    pub fn new(samples: Vec<Complex64>, oversample: usize) -> Self {
        Self { samples, oversample }
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// True when the buffer holds no samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total energy, the sum of squared sample magnitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x.norm_sqr()).sum()
    }
}

/// The N complex DFT outputs of the dechirped symbol; the demodulator picks
/// the bin with the largest magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMetric {
    /// Unitary DFT bins Y[k].
    pub bins: Vec<Complex64>,
}

impl DecisionMetric {
    /// Index and magnitude of the largest-magnitude bin. Ties resolve to the
    /// lowest index: a later bin must be strictly larger to win.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0usize;
        let mut best_mag = self.bins.first().map_or(0.0, |b| b.norm());
        for (k, bin) in self.bins.iter().enumerate().skip(1) {
            let mag = bin.norm();
            if mag > best_mag {
                best = k;
                best_mag = mag;
            }
        }
        (best, best_mag)
    }
}

/// Chirp phase in cycles at fractional chip time `tau = m / beta`.
///
/// The two linear-frequency pieces join with continuous phase at
/// `tau = N - s`, where the instantaneous frequency folds from +B/2 down to
/// -B/2. Every term is a dyadic rational for power-of-two `beta`, so the
/// value is exact in f64 and decimation reproduces the critical-rate phase
/// bit for bit.
fn chirp_phase_cycles(big_n: f64, s: f64, tau: f64) -> f64 {
    let mut cycles = tau * tau / (2.0 * big_n) + (s / big_n - 0.5) * tau;
    let fold_tau = big_n - s;
    if tau >= fold_tau {
        cycles -= tau - fold_tau;
    }
    cycles
}

/// One unit-modulus sample from a phase given in cycles. The phase is
/// reduced modulo one cycle before the trig call; without the reduction the
/// raw argument grows to ~2^13 cycles at SF12 and argument rounding alone
/// exceeds the 1e-12 sample tolerance.
fn phasor_from_cycles(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.round();
    let (im, re) = (TAU * frac).sin_cos();
    Complex64::new(re, im)
}

/// Synthesizes the symbol-`s` upchirp for `cfg`, oversampled by `cfg.oversample()`.
///
/// Keeping every beta-th output sample reproduces the critically sampled
/// symbol exactly.
pub fn gen_symbol(cfg: &LoraConfig, s: usize) -> Result<IqBuffer> {
    if s >= cfg.n() {
        return Err(ChirpError::Domain(format!(
            "symbol index {s} outside 0..{}",
            cfg.n()
        )));
    }
    let big_n = cfg.n() as f64;
    let beta = cfg.oversample as f64;
    let s_f = s as f64;
    let samples = (0..cfg.total_samples())
        .map(|m| phasor_from_cycles(chirp_phase_cycles(big_n, s_f, m as f64 / beta)))
        .collect();
    Ok(IqBuffer::new(samples, cfg.oversample))
}

/// Extracts the length-`N_low` segment of the high-SF upchirp (symbol 0)
/// starting at base-rate offset `n_s`, oversampled like the configs.
///
/// Both configurations must share bandwidth and oversampling, and the segment
/// must fit inside the high-SF symbol: `0 <= n_s <= N_high - N_low`. The
/// samples are unit modulus, so the segment has unit mean power.
pub fn gen_high_segment(
    cfg_high: &LoraConfig,
    cfg_low: &LoraConfig,
    n_s: usize,
) -> Result<IqBuffer> {
    if cfg_high.sf <= cfg_low.sf {
        return Err(ChirpError::InvalidConfig(format!(
            "high spreading factor {} must exceed low {}",
            cfg_high.sf, cfg_low.sf
        )));
    }
    if cfg_high.bandwidth_hz != cfg_low.bandwidth_hz || cfg_high.oversample != cfg_low.oversample {
        return Err(ChirpError::InvalidConfig(
            "high and low configs must share bandwidth and oversampling".into(),
        ));
    }
    let n_high = cfg_high.n();
    let n_low = cfg_low.n();
    if n_s > n_high - n_low {
        return Err(ChirpError::Domain(format!(
            "segment offset {n_s} outside 0..={}",
            n_high - n_low
        )));
    }
    let big_n = n_high as f64;
    let beta = cfg_high.oversample as f64;
    let start = n_s * cfg_high.oversample;
    let samples = (start..start + cfg_low.total_samples())
        .map(|m| phasor_from_cycles(chirp_phase_cycles(big_n, 0.0, m as f64 / beta)))
        .collect();
    Ok(IqBuffer::new(samples, cfg_high.oversample))
}

/// Multiplies a critically sampled buffer by the conjugate upchirp, turning
/// each symbol into a complex tone. Pointwise multiplication by unit-modulus
/// samples, so energy is preserved exactly.
pub fn dechirp(buf: &IqBuffer, cfg: &LoraConfig) -> Result<IqBuffer> {
    if buf.oversample != 1 {
        return Err(ChirpError::BufferMismatch(format!(
            "dechirp expects critical sampling, got oversample {}",
            buf.oversample
        )));
    }
    if buf.len() != cfg.n() {
        return Err(ChirpError::BufferMismatch(format!(
            "dechirp expects {} samples, got {}",
            cfg.n(),
            buf.len()
        )));
    }
    let upchirp = gen_symbol(&cfg.critical(), 0)?;
    let samples = buf
        .samples
        .iter()
        .zip(&upchirp.samples)
        .map(|(r, x0)| x0.conj() * r)
        .collect();
    Ok(IqBuffer::new(samples, 1))
}

thread_local! {
    // The planner memoizes plans internally, so repeated calls for the same
    // length are cheap; one planner per thread keeps dft_metric lock-free.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub(crate) fn plan_fft_inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Unitary DFT of the dechirped buffer: `Y[k] = (1/sqrt(N)) * sum y[n] e^{-j2pi kn/N}`.
///
/// The 1/sqrt(N) scaling makes the transform energy-preserving, which puts
/// the signal peak of a clean symbol at exactly `sqrt(N)`.
pub fn dft_metric(buf: &IqBuffer) -> Result<DecisionMetric> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(ChirpError::BufferMismatch(format!(
            "DFT length {n} is not a power of two"
        )));
    }
    let mut bins = buf.samples.clone();
    plan_fft(n).process(&mut bins);
    let scale = 1.0 / (n as f64).sqrt();
    for b in &mut bins {
        *b *= scale;
    }
    Ok(DecisionMetric { bins })
}

/// Keeps every `beta`-th sample, starting at index 0. No anti-alias filter is
/// applied: per-sample noise power is the same at both rates, which is the
/// convention the effective-SNR expressions assume.
pub fn decimate(buf: &IqBuffer, beta: usize) -> Result<IqBuffer> {
    if beta == 0 {
        return Err(ChirpError::Domain("decimation factor must be at least 1".into()));
    }
    if buf.len() % beta != 0 {
        return Err(ChirpError::BufferMismatch(format!(
            "length {} not divisible by decimation factor {beta}",
            buf.len()
        )));
    }
    if buf.oversample % beta != 0 {
        return Err(ChirpError::BufferMismatch(format!(
            "oversample tag {} not divisible by decimation factor {beta}",
            buf.oversample
        )));
    }
    let samples = buf.samples.iter().step_by(beta).copied().collect();
    Ok(IqBuffer::new(samples, buf.oversample / beta))
}
