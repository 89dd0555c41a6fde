//! Receiver-side processing: the legacy dechirp-and-DFT symbol detector, the
//! successive-cancellation step that strips the detected low-SF symbol, the
//! coherent BPSK correlator for the superposed layer, and an optional
//! complex bandpass prefilter for the correlator input.

use num_complex::Complex64;

use crate::waveform::{decimate, dechirp, dft_metric, gen_symbol, DecisionMetric, IqBuffer, LoraConfig};
use crate::{ChirpError, Result};

/// Output of the legacy demodulator: the detected symbol, its peak
/// magnitude, and the full decision metric for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodResult {
    /// Detected symbol index (argmax bin, lowest index on ties).
    pub s_hat: usize,
    /// Magnitude of the winning bin.
    pub peak: f64,
    /// All `N` DFT bins of the dechirped signal.
    pub metric: DecisionMetric,
}

/// Demodulates one low-SF symbol with the standard dechirp-and-DFT receiver.
///
/// The buffer may arrive at any oversampling factor; it is decimated to the
/// critical rate first (the receiver convention: keep every `beta`-th
/// sample, no anti-alias filter, so per-sample noise statistics are
/// unchanged). After decimation the buffer must hold exactly `N` samples.
pub fn demod_lora(rx: &IqBuffer, cfg: &LoraConfig) -> Result<DemodResult> {
    let critical = decimate(rx, rx.oversample)?;
    if critical.len() != cfg.n() {
        return Err(ChirpError::BufferMismatch(format!(
            "{} samples after decimation, expected {}",
            critical.len(),
            cfg.n()
        )));
    }
    let metric = dft_metric(&dechirp(&critical, cfg)?)?;
    let (s_hat, peak) = metric.argmax();
    Ok(DemodResult { s_hat, peak, metric })
}

/// Subtracts an ideal unit-power reconstruction of low-SF symbol `s` from
/// the received buffer, leaving the superposed layer plus noise.
///
/// `rx` must match the config's oversampling and length. The reconstruction
/// assumes perfect gain and timing, so a correct `s` removes the low layer
/// exactly; a wrong `s` leaves the difference of two chirps behind.
pub fn reconstruct_and_cancel(rx: &IqBuffer, s: usize, cfg: &LoraConfig) -> Result<IqBuffer> {
    if rx.oversample != cfg.oversample() || rx.len() != cfg.total_samples() {
        return Err(ChirpError::BufferMismatch(format!(
            "{} samples at x{}, expected {} at x{}",
            rx.len(),
            rx.oversample,
            cfg.total_samples(),
            cfg.oversample()
        )));
    }
    let reference = gen_symbol(cfg, s)?;
    let samples = rx
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(r, x)| r - x)
        .collect();
    Ok(IqBuffer::new(samples, rx.oversample))
}

/// Coherent BPSK decision on the cancellation residual: correlates against
/// the known high-SF segment and slices the real part.
///
/// Returns the detected bit (`0` for `Re(z) >= 0`, `1` otherwise) and the
/// raw correlator output `z = sum conj(template[m]) * residual[m]`.
pub fn correlate_bpsk(residual: &IqBuffer, template: &IqBuffer) -> Result<(u8, Complex64)> {
    if residual.len() != template.len() || residual.oversample != template.oversample {
        return Err(ChirpError::BufferMismatch(format!(
            "residual {} samples at x{} vs template {} at x{}",
            residual.len(),
            residual.oversample,
            template.len(),
            template.oversample
        )));
    }
    if residual.is_empty() {
        return Err(ChirpError::Domain("empty correlation buffers".into()));
    }
    let z: Complex64 = residual
        .samples
        .iter()
        .zip(&template.samples)
        .map(|(r, t)| t.conj() * r)
        .sum();
    Ok((u8::from(z.re < 0.0), z))
}

/// Mean instantaneous frequency of the high-SF segment at offset `n_s`, in
/// Hz. With the offset centered in the high symbol this is exactly 0.
pub fn segment_center_hz(cfg_low: &LoraConfig, cfg_high: &LoraConfig, n_s: usize) -> f64 {
    let n_l = cfg_low.n() as f64;
    let n_h = cfg_high.n() as f64;
    cfg_high.bandwidth_hz() * ((n_s as f64 + n_l / 2.0) / n_h - 0.5)
}

/// Default passband width for the correlator prefilter: twice the frequency
/// span `B * N_l / N_h` the segment sweeps during one low-SF symbol.
pub fn default_bpf_width_hz(cfg_low: &LoraConfig, cfg_high: &LoraConfig) -> f64 {
    2.0 * cfg_high.bandwidth_hz() * cfg_low.n() as f64 / cfg_high.n() as f64
}

/// Complex windowed-sinc bandpass taps: a Hamming-windowed lowpass of
/// cutoff `width_hz / 2` modulated to `center_hz`, normalized to unit gain
/// at the center frequency. The tap count `ceil(13.2 * fs / width_hz)`
/// (rounded up to odd) sets the Hamming transition band to about a quarter
/// of the passband width, leaving the central half of the passband flat.
fn design_bandpass_taps(center_hz: f64, width_hz: f64, fs: f64) -> Result<Vec<Complex64>> {
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(ChirpError::Domain(format!("sample rate {fs} must be positive")));
    }
    if !(width_hz > 0.0) || width_hz > fs {
        return Err(ChirpError::Domain(format!(
            "passband width {width_hz} must lie in (0, {fs}]"
        )));
    }
    if !(center_hz.abs() <= fs / 2.0) {
        return Err(ChirpError::Domain(format!(
            "center frequency {center_hz} outside +-{}",
            fs / 2.0
        )));
    }
    let mut m = (13.2 * fs / width_hz).ceil() as usize;
    if m > 1 << 20 {
        return Err(ChirpError::Domain(format!(
            "passband width {width_hz} needs {m} taps, above the 2^20 limit"
        )));
    }
    if m % 2 == 0 {
        m += 1;
    }
    let mid = (m / 2) as f64;
    let fc = width_hz / 2.0 / fs; // normalized lowpass cutoff
    let mut taps: Vec<Complex64> = (0..m)
        .map(|n| {
            let t = n as f64 - mid;
            let x = 2.0 * fc * t;
            let lp = 2.0 * fc
                * if x == 0.0 {
                    1.0
                } else {
                    (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
                };
            let w = 0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (m as f64 - 1.0)).cos();
            let phase = std::f64::consts::TAU * center_hz / fs * t;
            Complex64::from_polar(lp * w, phase)
        })
        .collect();
    let gain: Complex64 = taps
        .iter()
        .enumerate()
        .map(|(n, h)| {
            let phase = -std::f64::consts::TAU * center_hz / fs * n as f64;
            h * Complex64::from_polar(1.0, phase)
        })
        .sum();
    let inv = gain.inv();
    for h in &mut taps {
        *h *= inv;
    }
    Ok(taps)
}

/// Evaluates the designed frequency response `H(f) = sum h[n] e^{-j2pi f n/fs}`.
#[cfg(test)]
fn frequency_response(taps: &[Complex64], f_hz: f64, fs: f64) -> Complex64 {
    taps.iter()
        .enumerate()
        .map(|(n, h)| h * Complex64::from_polar(1.0, -std::f64::consts::TAU * f_hz / fs * n as f64))
        .sum()
}

/// Filters the buffer with the complex bandpass, compensating the filter's
/// group delay so the output stays aligned with the input.
///
/// Convolution runs through zero-padded FFTs. The first and last `M/2`
/// output samples carry edge transients from the implicit zero padding,
/// where `M` is the tap count (about `3.3 * fs / width_hz`).
pub fn bandpass(buf: &IqBuffer, center_hz: f64, width_hz: f64, fs: f64) -> Result<IqBuffer> {
    if buf.is_empty() {
        return Err(ChirpError::Domain("empty filter input".into()));
    }
    let taps = design_bandpass_taps(center_hz, width_hz, fs)?;
    let m = taps.len();
    let nfft = (buf.len() + m - 1).next_power_of_two();
    let mut sig = vec![Complex64::default(); nfft];
    sig[..buf.len()].copy_from_slice(&buf.samples);
    let mut ker = vec![Complex64::default(); nfft];
    ker[..m].copy_from_slice(&taps);
    crate::waveform::plan_fft(nfft).process(&mut sig);
    crate::waveform::plan_fft(nfft).process(&mut ker);
    for (s, k) in sig.iter_mut().zip(&ker) {
        *s *= k;
    }
    crate::waveform::plan_fft_inverse(nfft).process(&mut sig);
    let scale = 1.0 / nfft as f64;
    let delay = m / 2;
    let samples = sig[delay..delay + buf.len()]
        .iter()
        .map(|x| x * scale)
        .collect();
    Ok(IqBuffer::new(samples, buf.oversample))
}
