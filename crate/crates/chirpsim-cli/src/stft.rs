//! Short-time Fourier magnitudes for the spectrogram command.

use anyhow::{ensure, Result};
use chirpsim::waveform::{dft_metric, IqBuffer};
use num_complex::Complex64;

/// Magnitude matrix of a short-time Fourier transform.
pub struct Stft {
    /// Window length in samples.
    pub window: usize,
    /// Hop between frame starts in samples.
    pub hop: usize,
    /// One magnitude vector per frame, frequency-shifted so row 0 is
    /// -fs/2 and row `window/2` is 0 Hz.
    pub frames: Vec<Vec<f64>>,
}

impl Stft {
    /// Center time of frame `f` in seconds at sample rate `fs`.
    pub fn frame_time_s(&self, f: usize, fs: f64) -> f64 {
        (f * self.hop + self.window / 2) as f64 / fs
    }

    /// Frequency of row `r` in Hz at sample rate `fs`.
    pub fn row_freq_hz(&self, r: usize, fs: f64) -> f64 {
        (r as f64 - (self.window / 2) as f64) * fs / self.window as f64
    }
}

/// Computes windowed DFT magnitudes over sliding frames of `samples`.
///
/// Frames use a raised-cosine window `0.5 (1 - cos(2 pi n / W))` and are
/// spaced `hop` samples apart; the last partial frame is dropped. The DFT
/// output is rotated so the zero-frequency bin sits at row `window / 2`.
pub fn stft(samples: &[Complex64], window: usize, hop: usize) -> Result<Stft> {
    ensure!(window >= 2 && window.is_power_of_two(), "window length {window} must be a power of two and at least 2");
    ensure!(hop >= 1, "hop must be at least 1");
    ensure!(
        samples.len() >= window,
        "waveform has {} samples, shorter than the {window}-sample window",
        samples.len()
    );
    let taper: Vec<f64> = (0..window)
        .map(|n| 0.5 * (1.0 - (std::f64::consts::TAU * n as f64 / window as f64).cos()))
        .collect();
    let n_frames = (samples.len() - window) / hop + 1;
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * hop;
        let windowed: Vec<Complex64> = samples[start..start + window]
            .iter()
            .zip(&taper)
            .map(|(x, w)| x * w)
            .collect();
        let metric = dft_metric(&IqBuffer::new(windowed, 1))?;
        let mut mags = vec![0.0; window];
        for (k, bin) in metric.bins.iter().enumerate() {
            mags[(k + window / 2) % window] = bin.norm();
        }
        frames.push(mags);
    }
    Ok(Stft { window, hop, frames })
}
