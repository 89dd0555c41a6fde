//! Two-layer signal composition and the AWGN channel.
//!
//! Powers are normalized to the low-SF layer: `P_l = 1`, the superposed
//! high-SF layer carries `P_h = 1/kappa`, and noise power is `P_n = 1/gamma`
//! where `gamma` is the baseline SNR. Both `kappa` and `gamma` may be
//! infinite, disabling the superposed layer or the noise respectively.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::waveform::IqBuffer;
use crate::{ChirpError, Result};

/// Parameters of the superposed transmission: the SF pair, the segment
/// offset, and the low-to-high power ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperposConfig {
    sf_low: u32,
    sf_high: u32,
    n_s: usize,
    kappa: f64,
}

impl SuperposConfig {
    /// Validates the SF ordering, the offset range, and the power ratio.
    ///
    /// `kappa` is the linear ratio `P_l / P_h`; it must be positive, and
    /// `f64::INFINITY` disables the superposed layer.
    pub fn new(sf_low: u32, sf_high: u32, n_s: usize, kappa: f64) -> Result<Self> {
        if sf_high <= sf_low {
            return Err(ChirpError::InvalidConfig(format!(
                "high spreading factor {sf_high} must exceed low {sf_low}"
            )));
        }
        let max_offset = (1usize << sf_high) - (1usize << sf_low);
        if n_s > max_offset {
            return Err(ChirpError::InvalidConfig(format!(
                "segment offset {n_s} outside 0..={max_offset}"
            )));
        }
        if !(kappa > 0.0) {
            return Err(ChirpError::InvalidConfig(format!(
                "power ratio kappa {kappa} must be positive"
            )));
        }
        Ok(Self { sf_low, sf_high, n_s, kappa })
    }

    /// Low spreading factor.
    pub fn sf_low(&self) -> u32 {
        self.sf_low
    }

    /// High spreading factor.
    pub fn sf_high(&self) -> u32 {
        self.sf_high
    }

    /// Segment offset in base-rate samples.
    pub fn n_s(&self) -> usize {
        self.n_s
    }

    /// Linear low-to-high power ratio; infinite when the layer is disabled.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The offset that centers the segment's instantaneous frequency at DC,
    /// `(N_high - N_low) / 2`.
    pub fn centered_offset(sf_low: u32, sf_high: u32) -> usize {
        ((1usize << sf_high) - (1usize << sf_low)) / 2
    }
}

/// The three signal powers of one scenario, all relative to `P_l = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    /// Low-SF layer power, fixed at 1.
    pub p_low: f64,
    /// Superposed layer power `1/kappa`; zero when the layer is disabled.
    pub p_high: f64,
    /// Noise power `1/gamma`; zero when noiseless.
    pub p_noise: f64,
}

impl PowerModel {
    /// Builds the power triple from linear `kappa` and `gamma`.
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(ChirpError::Domain(format!("kappa {kappa} must be positive")));
        }
        if !(gamma > 0.0) {
            return Err(ChirpError::Domain(format!("gamma {gamma} must be positive")));
        }
        Ok(Self {
            p_low: 1.0,
            p_high: if kappa.is_infinite() { 0.0 } else { 1.0 / kappa },
            p_noise: if gamma.is_infinite() { 0.0 } else { 1.0 / gamma },
        })
    }
}

/// Adds the power-scaled, BPSK-modulated high-SF segment to the low-SF
/// symbol: `out[m] = low[m] + sqrt(1/kappa) * c * high[m]` with
/// `c = 1 - 2*bit`. With `kappa` infinite the output equals the low symbol.
pub fn compose_tx(
    low_symbol: &IqBuffer,
    high_segment: &IqBuffer,
    bit: u8,
    cfg: &SuperposConfig,
) -> Result<IqBuffer> {
    if bit > 1 {
        return Err(ChirpError::Domain(format!("bit {bit} must be 0 or 1")));
    }
    if low_symbol.len() != high_segment.len() || low_symbol.oversample != high_segment.oversample {
        return Err(ChirpError::BufferMismatch(format!(
            "layers disagree: {} samples at x{} vs {} samples at x{}",
            low_symbol.len(),
            low_symbol.oversample,
            high_segment.len(),
            high_segment.oversample
        )));
    }
    if cfg.kappa.is_infinite() {
        return Ok(low_symbol.clone());
    }
    let c = 1.0 - 2.0 * bit as f64;
    let amp = c * (1.0 / cfg.kappa).sqrt();
    let samples = low_symbol
        .samples
        .iter()
        .zip(&high_segment.samples)
        .map(|(l, h)| l + amp * h)
        .collect();
    Ok(IqBuffer::new(samples, low_symbol.oversample))
}

/// Adds circularly symmetric complex Gaussian noise of per-sample variance
/// `P_n = 1/gamma` to every sample; `gamma` infinite returns the input
/// unchanged without consuming random draws.
///
/// The per-sample variance is the same at every oversampling rate,
/// matching the decimate-without-filtering receiver convention. Draw order
/// is fixed (real then imaginary, in sample order) so that results are a
/// deterministic function of the stream state.
pub fn awgn<R: Rng + ?Sized>(buf: &IqBuffer, gamma_linear: f64, rng: &mut R) -> Result<IqBuffer> {
    if !(gamma_linear > 0.0) {
        return Err(ChirpError::Domain(format!(
            "gamma {gamma_linear} must be positive"
        )));
    }
    if gamma_linear.is_infinite() {
        return Ok(buf.clone());
    }
    let sigma = (0.5 / gamma_linear).sqrt(); // per-component std dev
    let samples = buf
        .samples
        .iter()
        .map(|x| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x + Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    Ok(IqBuffer::new(samples, buf.oversample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{dft_metric, gen_high_segment, gen_symbol, LoraConfig};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(beta: usize) -> (LoraConfig, LoraConfig) {
        (
            LoraConfig::new(7, 125e3, beta).unwrap(),
            LoraConfig::new(12, 125e3, beta).unwrap(),
        )
    }

    // --- SuperposConfig ---

    #[test]
    fn superpos_config_validation() {
        assert!(SuperposConfig::new(7, 12, 0, 4.0).is_ok());
        assert!(SuperposConfig::new(7, 12, 3968, 4.0).is_ok());
        assert!(SuperposConfig::new(7, 12, 3969, 4.0).is_err());
        assert!(SuperposConfig::new(7, 7, 0, 4.0).is_err());
        assert!(SuperposConfig::new(12, 7, 0, 4.0).is_err());
        assert!(SuperposConfig::new(7, 12, 0, 0.0).is_err());
        assert!(SuperposConfig::new(7, 12, 0, -1.0).is_err());
        assert!(SuperposConfig::new(7, 12, 0, f64::NAN).is_err());
        assert!(SuperposConfig::new(7, 12, 0, f64::INFINITY).is_ok());
    }

    #[test]
    fn centered_offset_matches_arithmetic() {
        assert_eq!(SuperposConfig::centered_offset(7, 12), 1984);
        assert_eq!(SuperposConfig::centered_offset(7, 8), 64);
    }

    // --- PowerModel ---

    #[test]
    fn power_model_limits() {
        let pm = PowerModel::new(4.0, 2.0).unwrap();
        assert_abs_diff_eq!(pm.p_low, 1.0);
        assert_abs_diff_eq!(pm.p_high, 0.25);
        assert_abs_diff_eq!(pm.p_noise, 0.5);
        let inf = PowerModel::new(f64::INFINITY, f64::INFINITY).unwrap();
        assert_eq!(inf.p_high, 0.0);
        assert_eq!(inf.p_noise, 0.0);
        assert!(PowerModel::new(0.0, 1.0).is_err());
        assert!(PowerModel::new(1.0, 0.0).is_err());
    }

    // --- compose_tx ---

    #[test]
    fn compose_with_infinite_kappa_is_identity() {
        let (low, high) = pair(4);
        let cfg = SuperposConfig::new(7, 12, 1984, f64::INFINITY).unwrap();
        let l = gen_symbol(&low, 9).unwrap();
        let h = gen_high_segment(&high, &low, 1984).unwrap();
        let out = compose_tx(&l, &h, 0, &cfg).unwrap();
        assert_eq!(out, l);
    }

    #[test]
    fn compose_bit_one_at_unit_kappa_subtracts() {
        let (low, high) = pair(1);
        let cfg = SuperposConfig::new(7, 12, 0, 1.0).unwrap();
        let l = gen_symbol(&low, 9).unwrap();
        let h = gen_high_segment(&high, &low, 0).unwrap();
        let out = compose_tx(&l, &h, 1, &cfg).unwrap();
        for ((o, a), b) in out.samples.iter().zip(&l.samples).zip(&h.samples) {
            assert!((o - (a - b)).norm() < 1e-15);
        }
    }

    #[test]
    fn compose_mean_power_adds_over_bit_ensemble() {
        // Per-symbol chirp cross-terms can reach several percent; averaged
        // over the equiprobable bit they cancel exactly, leaving 1 + 1/kappa.
        let (low, high) = pair(16);
        let cfg = SuperposConfig::new(7, 12, 1984, 4.0).unwrap();
        let h = gen_high_segment(&high, &low, 1984).unwrap();
        for s in [0usize, 37, 64, 101] {
            let l = gen_symbol(&low, s).unwrap();
            let p0 = compose_tx(&l, &h, 0, &cfg).unwrap().energy();
            let p1 = compose_tx(&l, &h, 1, &cfg).unwrap().energy();
            let mean_power = (p0 + p1) / 2.0 / l.len() as f64;
            assert!((mean_power - 1.25).abs() / 1.25 < 0.01, "s={s} power={mean_power}");
        }
    }

    #[test]
    fn compose_superposition_linearity() {
        let (low, high) = pair(2);
        let cfg = SuperposConfig::new(7, 12, 100, 2.0).unwrap();
        let l = gen_symbol(&low, 55).unwrap();
        let h = gen_high_segment(&high, &low, 100).unwrap();
        let with = compose_tx(&l, &h, 0, &cfg).unwrap();
        let amp = (1.0f64 / 2.0).sqrt();
        for ((w, a), b) in with.samples.iter().zip(&l.samples).zip(&h.samples) {
            assert!((w - a - amp * b).norm() < 1e-15);
        }
    }

    #[test]
    fn compose_rejects_mismatch_and_bad_bit() {
        let (low, high) = pair(1);
        let cfg = SuperposConfig::new(7, 12, 0, 1.0).unwrap();
        let l = gen_symbol(&low, 0).unwrap();
        let h = gen_high_segment(&high, &low, 0).unwrap();
        assert!(compose_tx(&l, &h, 2, &cfg).is_err());
        let short = IqBuffer::new(h.samples[..64].to_vec(), 1);
        assert!(compose_tx(&l, &short, 0, &cfg).is_err());
        let wrong_rate = IqBuffer::new(h.samples.clone(), 2);
        assert!(compose_tx(&l, &wrong_rate, 0, &cfg).is_err());
    }

    // --- awgn ---

    #[test]
    fn awgn_infinite_gamma_is_identity_and_consumes_nothing() {
        let (low, _) = pair(1);
        let l = gen_symbol(&low, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = awgn(&l, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(out, l);
        let mut fresh = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(rng.random::<u64>(), fresh.random::<u64>());
    }

    #[test]
    fn awgn_is_deterministic_for_fixed_seed() {
        let (low, _) = pair(1);
        let l = gen_symbol(&low, 1).unwrap();
        let a = awgn(&l, 2.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = awgn(&l, 2.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn awgn_empirical_variance_matches() {
        // 1e6 samples at gamma = 0 dB: sample variance within 0.5% of 1.
        let buf = IqBuffer::new(vec![Complex64::new(0.0, 0.0); 1_000_000], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = awgn(&buf, 1.0, &mut rng).unwrap();
        let var = out.energy() / out.len() as f64;
        assert!((var - 1.0).abs() < 0.005, "variance {var}");
    }

    #[test]
    fn awgn_rejects_non_positive_gamma() {
        let buf = IqBuffer::new(vec![Complex64::new(0.0, 0.0); 4], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(awgn(&buf, 0.0, &mut rng).is_err());
        assert!(awgn(&buf, -1.0, &mut rng).is_err());
        assert!(awgn(&buf, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn noise_is_white_across_dft_bins() {
        // Unitary DFT of pure noise: per-bin mean power P_n, checked within
        // 3 sigma over 10^4 realizations of 64 bins.
        let n = 64usize;
        let reps = 10_000usize;
        let p_n = 2.0; // gamma = 0.5
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zero = IqBuffer::new(vec![Complex64::new(0.0, 0.0); n], 1);
        let mut bin_power = vec![0.0f64; n];
        for _ in 0..reps {
            let noisy = awgn(&zero, 0.5, &mut rng).unwrap();
            let m = dft_metric(&noisy).unwrap();
            for (acc, b) in bin_power.iter_mut().zip(&m.bins) {
                *acc += b.norm_sqr();
            }
        }
        // |W_k|^2 is exponential with mean P_n and std P_n; the mean of
        // `reps` draws has std P_n/sqrt(reps).
        let sigma = p_n / (reps as f64).sqrt();
        for (k, acc) in bin_power.iter().enumerate() {
            let mean = acc / reps as f64;
            assert!((mean - p_n).abs() < 3.0 * sigma, "bin {k}: {mean}");
        }
    }
}
