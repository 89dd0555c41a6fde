//! Closed-form and numerical evaluation of the scheme's error-rate theory:
//! the interference spectrum of the superposed segment, effective SNRs for
//! both layers, the low-SF symbol error rate, the high-SF bit error rate,
//! and the joint feasibility region.
//!
//! Notation used throughout: `N_l = 2^sf_low`, `N_h = 2^sf_high`, baseline
//! SNR `gamma = P_l/P_n`, power ratio `kappa = P_l/P_h`.

use crate::numeric::{adaptive_simpson, ln_i0e};
use crate::waveform::{dechirp, dft_metric, gen_symbol, IqBuffer, LoraConfig};
use crate::{ChirpError, Result};

/// Stationary-phase description of the interference spectrum `|U[k]|` that a
/// high-SF segment leaves in the low-SF demodulator's DFT bins.
///
/// The dechirped segment is a quadratic-phase sum whose stationary point for
/// bin `k` is `n0(k) = -q_k / p`. Bins whose stationary point falls inside
/// the observation window form a contiguous block `K` (modulo `N_l`) where
/// the magnitude is approximately flat at `1/sqrt(N_l |p|)`; outside the
/// block the magnitude drops off.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPrediction {
    /// Chirp-rate mismatch `p = (N_l - N_h) / (N_l * N_h)`, negative for
    /// `sf_high > sf_low`.
    pub p: f64,
    /// Linear-phase coefficients `q_k = (n_s + s_h)/N_h - k/N_l` for
    /// `k = 0..N_l-1`.
    pub q: Vec<f64>,
    /// First bin of the block `K`.
    pub k_start: usize,
    /// Last bin of `K`, stored unwrapped: `k_start <= k_end` always, and
    /// bins past `N_l - 1` are taken modulo `N_l` (the block is circular).
    pub k_end: usize,
    /// Flat interference magnitude `1/sqrt(N_l |p|)` inside the block.
    pub flat_level: f64,
    /// Exact number of bins in `K`.
    pub block_size: usize,
}

impl SpectrumPrediction {
    /// Number of low-SF bins.
    pub fn n_bins(&self) -> usize {
        self.q.len()
    }

    /// True when bin `k` belongs to the block `K`.
    pub fn in_block(&self, k: usize) -> bool {
        let n = self.n_bins();
        let offset = (k + n - self.k_start % n) % n;
        offset < self.block_size
    }

    /// The asymptotic block-size estimate `N_l * (1 - N_l/N_h) = N_l^2 |p|`;
    /// the exact [`Self::block_size`] stays within a few bins of it.
    pub fn asymptotic_block_size(&self) -> f64 {
        let n = self.n_bins() as f64;
        n * n * self.p.abs()
    }
}

/// One cell of the feasibility grid with its two constraint verdicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleCell {
    /// Baseline SNR of the cell, dB.
    pub gamma_db: f64,
    /// Power ratio of the cell, dB.
    pub kappa_db: f64,
    /// Low-SF layer meets its effective-SNR threshold.
    pub lora_ok: bool,
    /// Superposed layer meets the BER target.
    pub high_ok: bool,
}

impl FeasibleCell {
    /// Both constraints hold.
    pub fn feasible(&self) -> bool {
        self.lora_ok && self.high_ok
    }
}

/// Parameters of the feasibility evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleParams {
    /// Minimum effective low-layer SNR for successful demodulation, dB.
    pub lora_threshold_db: f64,
    /// Maximum acceptable bit error rate on the superposed layer.
    pub ber_target: f64,
    /// Receiver oversampling factor entering the correlator SNR.
    pub beta: usize,
    /// Low spreading factor.
    pub sf_low: u32,
}

impl Default for FeasibleParams {
    fn default() -> Self {
        Self { lora_threshold_db: -6.0, ber_target: 1e-5, beta: 16, sf_low: 7 }
    }
}

impl FeasibleParams {
    /// Default baseline-SNR grid: -20 dB to +10 dB in 0.25 dB steps.
    pub fn default_gamma_grid_db() -> Vec<f64> {
        grid_db(-20.0, 10.0, 0.25)
    }

    /// Default power-ratio grid: 0 dB to 40 dB in 0.25 dB steps.
    pub fn default_kappa_grid_db() -> Vec<f64> {
        grid_db(0.0, 40.0, 0.25)
    }
}

fn grid_db(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step).round() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

fn validate_sf_pair(cfg_low: &LoraConfig, cfg_high: &LoraConfig, n_s: usize, s_h: usize) -> Result<()> {
    if cfg_high.sf() == cfg_low.sf() {
        return Err(ChirpError::Domain(
            "equal spreading factors give zero chirp-rate mismatch".into(),
        ));
    }
    if cfg_high.sf() < cfg_low.sf() {
        return Err(ChirpError::InvalidConfig(format!(
            "high spreading factor {} must exceed low {}",
            cfg_high.sf(),
            cfg_low.sf()
        )));
    }
    let max_offset = cfg_high.n() - cfg_low.n();
    if n_s > max_offset {
        return Err(ChirpError::Domain(format!(
            "segment offset {n_s} outside 0..={max_offset}"
        )));
    }
    if s_h >= cfg_high.n() {
        return Err(ChirpError::Domain(format!(
            "high symbol index {s_h} outside 0..{}",
            cfg_high.n()
        )));
    }
    Ok(())
}

/// Directly evaluates the interference magnitudes `|U[k]|`: the high-SF
/// segment (symbol `s_h`, offset `n_s`) is dechirped by the low-SF upchirp
/// and transformed with the unitary `N_l`-point DFT.
///
/// The computation runs at critical sampling regardless of the configs'
/// oversampling tags. For a unit-power segment the magnitudes satisfy
/// `sum_k |U[k]|^2 = N_l` exactly (energy conservation).
pub fn u_spectrum_bruteforce(
    cfg_low: &LoraConfig,
    cfg_high: &LoraConfig,
    n_s: usize,
    s_h: usize,
) -> Result<Vec<f64>> {
    validate_sf_pair(cfg_low, cfg_high, n_s, s_h)?;
    let low = cfg_low.critical();
    let high = cfg_high.critical();
    let n_l = low.n();
    let full_high = gen_symbol(&high, s_h)?;
    let segment = IqBuffer::new(full_high.samples[n_s..n_s + n_l].to_vec(), 1);
    let dechirped = dechirp(&segment, &low)?;
    let metric = dft_metric(&dechirped)?;
    Ok(metric.bins.iter().map(|b| b.norm()).collect())
}

/// Stationary-phase prediction of the interference spectrum: coefficients,
/// block bounds, and flat level.
///
/// Bin `k` belongs to `K` when the stationary point `n0(k) = -q_k/p` lies
/// strictly inside `(0, N_l)`. Because `q_k` enters the sum only through
/// `e^{j 2 pi q_k n}` with integer `n`, membership depends on `q_k` modulo 1;
/// the fractional part must fall in `(0, N_l |p|)`. The resulting block is
/// contiguous modulo `N_l` and may wrap past bin `N_l - 1`.
pub fn u_spectrum_stationary(
    cfg_low: &LoraConfig,
    cfg_high: &LoraConfig,
    n_s: usize,
    s_h: usize,
) -> Result<SpectrumPrediction> {
    validate_sf_pair(cfg_low, cfg_high, n_s, s_h)?;
    let n_l = cfg_low.n();
    let n_h = cfg_high.n();
    let n_l_f = n_l as f64;
    let n_h_f = n_h as f64;
    let p = (n_l_f - n_h_f) / (n_l_f * n_h_f);
    let width = n_l_f * p.abs(); // equals 1 - N_l/N_h, always in (0, 1)
    let q: Vec<f64> = (0..n_l)
        .map(|k| (n_s + s_h) as f64 / n_h_f - k as f64 / n_l_f)
        .collect();
    let member: Vec<bool> = q
        .iter()
        .map(|&qk| {
            let frac = qk - qk.floor();
            frac > 0.0 && frac < width
        })
        .collect();
    let block_size = member.iter().filter(|&&m| m).count();
    if block_size == 0 {
        return Err(ChirpError::Domain("empty interference block".into()));
    }
    let k_start = if block_size == n_l {
        0
    } else {
        (0..n_l)
            .find(|&k| member[k] && !member[(k + n_l - 1) % n_l])
            .expect("nonempty non-full block has a boundary")
    };
    Ok(SpectrumPrediction {
        p,
        q,
        k_start,
        k_end: k_start + block_size - 1,
        flat_level: 1.0 / (n_l_f * p.abs()).sqrt(),
        block_size,
    })
}

/// Checks the peak bound `max_k |U[k]|^2 >= E / N` on a magnitude vector,
/// allowing `slack` of numerical slack. Any unimodular sequence concentrates
/// at least the average bin energy in its largest bin.
pub fn peak_bound_satisfied(magnitudes: &[f64], slack: f64) -> bool {
    if magnitudes.is_empty() {
        return false;
    }
    let energy: f64 = magnitudes.iter().map(|m| m * m).sum();
    let peak = magnitudes.iter().fold(0.0f64, |a, &m| a.max(m * m));
    peak >= energy / magnitudes.len() as f64 - slack
}

/// Rayleigh CDF of a noise-only DFT bin magnitude: `F(r) = 1 - e^{-r^2 gamma}`
/// for bin noise power `P_n = 1/gamma`.
pub fn rayleigh_cdf(r: f64, gamma: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(ChirpError::Domain(format!("amplitude {r} must be nonnegative")));
    }
    if !(gamma > 0.0) || gamma.is_infinite() {
        return Err(ChirpError::Domain(format!("gamma {gamma} must be positive and finite")));
    }
    Ok(-(-r * r * gamma).exp_m1())
}

/// Rice density of the signal bin magnitude for a unit-power symbol in bin
/// noise power `P_n = 1/gamma`:
/// `f(r) = 2 r gamma e^{-gamma (r^2 + N)} I0(2 r gamma sqrt(N))`.
///
/// Evaluated in log domain with the exponentially scaled Bessel function, so
/// it stays finite for any `N` and SNR.
pub fn rice_pdf(r: f64, gamma: f64, n_l: usize) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(ChirpError::Domain(format!("amplitude {r} must be nonnegative")));
    }
    if !(gamma > 0.0) || gamma.is_infinite() {
        return Err(ChirpError::Domain(format!("gamma {gamma} must be positive and finite")));
    }
    if n_l == 0 {
        return Err(ChirpError::Domain("bin count must be positive".into()));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let sqrt_n = (n_l as f64).sqrt();
    let ln_f = (2.0 * gamma * r).ln() - gamma * (r - sqrt_n) * (r - sqrt_n)
        + ln_i0e(2.0 * gamma * r * sqrt_n);
    Ok(ln_f.exp())
}

/// Symbol error rate of the dechirp-and-DFT detector at effective SNR
/// `gamma_eff`: the probability that any of the `N-1` Rayleigh noise bins
/// beats the Rice signal bin,
/// `P_e = 1 - int_0^inf F_Ra(r)^{N-1} f_Ri(r) dr`.
///
/// The integrand is evaluated as `(1 - F^{N-1}) f_Ri` so the result is an
/// integral of a nonnegative quantity rather than a difference of two
/// near-equal numbers; `1 - F^{N-1}` uses `ln_1p`/`exp_m1` throughout. The
/// domain is truncated at `sqrt(N) + 8/sqrt(gamma)`, beyond which the Rice
/// tail mass is below e^{-64} and the bracket only shrinks it further.
pub fn ser_lora(gamma_eff: f64, sf: u32) -> Result<f64> {
    if !(gamma_eff > 0.0) {
        return Err(ChirpError::Domain(format!("SNR {gamma_eff} must be positive")));
    }
    let n = 1usize << sf;
    if gamma_eff.is_infinite() {
        return Ok(0.0);
    }
    let n_f = n as f64;
    let sqrt_n = n_f.sqrt();
    let integrand = move |r: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let ln_f = (2.0 * gamma_eff * r).ln() - gamma_eff * (r - sqrt_n) * (r - sqrt_n)
            + ln_i0e(2.0 * gamma_eff * r * sqrt_n);
        let exponent = -gamma_eff * r * r;
        // 1 - F^{N-1} with F = 1 - e^{-gamma r^2}
        let bracket = if exponent > -745.0 {
            -((n_f - 1.0) * (-exponent.exp()).ln_1p()).exp_m1()
        } else {
            0.0
        };
        bracket * ln_f.exp()
    };
    // Split at the Rice mode r = sqrt(N) so the quadrature always sees the
    // peak; beyond sqrt(N) + 8/sqrt(gamma) the remaining mass is below
    // e^{-64} of the total.
    let hi = sqrt_n + 8.0 / gamma_eff.sqrt();
    let p = adaptive_simpson(&integrand, 0.0, sqrt_n, 1e-9)
        + adaptive_simpson(&integrand, sqrt_n, hi, 1e-9);
    Ok(p.clamp(0.0, 1.0))
}

/// Effective SNR of the low-SF layer with the superposed segment treated as
/// extra bin noise: `gamma_l = gamma kappa / (gamma + kappa)`, the harmonic
/// combination of channel noise and interference power.
pub fn eff_snr_low(gamma: f64, kappa: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(ChirpError::Domain(format!("gamma {gamma} must be positive")));
    }
    if !(kappa > 0.0) {
        return Err(ChirpError::Domain(format!("kappa {kappa} must be positive")));
    }
    if kappa.is_infinite() {
        return Ok(gamma);
    }
    if gamma.is_infinite() {
        return Ok(kappa);
    }
    Ok(gamma * kappa / (gamma + kappa))
}

/// Effective SNR of the superposed layer's correlator over `beta * N_l`
/// samples: `gamma_h = (gamma / kappa) * beta * N_l`.
pub fn eff_snr_high(gamma: f64, kappa: f64, beta: usize, n_l: usize) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(ChirpError::Domain(format!("gamma {gamma} must be positive")));
    }
    if !(kappa > 0.0) {
        return Err(ChirpError::Domain(format!("kappa {kappa} must be positive")));
    }
    if beta == 0 || n_l == 0 {
        return Err(ChirpError::Domain("beta and N_l must be positive".into()));
    }
    if kappa.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma / kappa * (beta * n_l) as f64)
}

/// BPSK bit error rate `P_b = Q(sqrt(2 gamma_h)) = erfc(sqrt(gamma_h)) / 2`.
///
/// Accepts `gamma_h = 0` (returns 1/2) and underflows to exactly 0 in the
/// deep tail (around `gamma_h > 700`), where the true value is below the
/// smallest positive double.
pub fn ber_bpsk(gamma_h: f64) -> Result<f64> {
    if gamma_h.is_nan() || gamma_h < 0.0 {
        return Err(ChirpError::Domain(format!("gamma_h {gamma_h} must be nonnegative")));
    }
    if gamma_h.is_infinite() {
        return Ok(0.0);
    }
    Ok(0.5 * libm::erfc(gamma_h.sqrt()))
}

/// Evaluates both feasibility constraints over the dB grids: the low layer
/// needs `gamma_l` at or above the demodulation threshold, the superposed
/// layer needs `P_b` at or below the BER target. Cells are emitted with
/// `gamma` as the outer loop and `kappa` as the inner loop.
pub fn feasible_region(
    gamma_grid_db: &[f64],
    kappa_grid_db: &[f64],
    params: &FeasibleParams,
) -> Result<Vec<FeasibleCell>> {
    if gamma_grid_db.is_empty() || kappa_grid_db.is_empty() {
        return Err(ChirpError::Domain("feasibility grids must be non-empty".into()));
    }
    for grid in [gamma_grid_db, kappa_grid_db] {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ChirpError::Domain("feasibility grids must be strictly increasing".into()));
        }
        if grid.iter().any(|v| v.is_nan()) {
            return Err(ChirpError::Domain("feasibility grids must not contain NaN".into()));
        }
    }
    if !(params.ber_target > 0.0 && params.ber_target < 1.0) {
        return Err(ChirpError::Domain(format!(
            "BER target {} must lie in (0, 1)",
            params.ber_target
        )));
    }
    let n_l = 1usize << params.sf_low;
    let threshold = 10f64.powf(params.lora_threshold_db / 10.0);
    let mut cells = Vec::with_capacity(gamma_grid_db.len() * kappa_grid_db.len());
    for &gamma_db in gamma_grid_db {
        let gamma = 10f64.powf(gamma_db / 10.0);
        for &kappa_db in kappa_grid_db {
            let kappa = 10f64.powf(kappa_db / 10.0);
            let gamma_l = eff_snr_low(gamma, kappa)?;
            let gamma_h = eff_snr_high(gamma, kappa, params.beta, n_l)?;
            cells.push(FeasibleCell {
                gamma_db,
                kappa_db,
                lora_ok: gamma_l >= threshold,
                high_ok: ber_bpsk(gamma_h)? <= params.ber_target,
            });
        }
    }
    Ok(cells)
}

/// Indices of cells whose overall feasibility differs from a horizontal or
/// vertical grid neighbor; together they trace the region boundary.
/// `n_kappa` is the inner (kappa) grid length used when the cells were laid
/// out.
pub fn feasibility_boundary(cells: &[FeasibleCell], n_kappa: usize) -> Vec<usize> {
    if n_kappa == 0 || cells.len() % n_kappa != 0 {
        return Vec::new();
    }
    let n_gamma = cells.len() / n_kappa;
    let at = |i: usize, j: usize| cells[i * n_kappa + j].feasible();
    let mut out = Vec::new();
    for i in 0..n_gamma {
        for j in 0..n_kappa {
            let here = at(i, j);
            let differs = (i > 0 && at(i - 1, j) != here)
                || (i + 1 < n_gamma && at(i + 1, j) != here)
                || (j > 0 && at(i, j - 1) != here)
                || (j + 1 < n_kappa && at(i, j + 1) != here);
            if differs {
                out.push(i * n_kappa + j);
            }
        }
    }
    out
}
