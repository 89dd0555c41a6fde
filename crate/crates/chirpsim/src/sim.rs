//! Deterministic Monte Carlo engine for end-to-end error rates.
//!
//! Every trial derives its randomness from the scenario seed plus the trial
//! index (one RNG stream per trial), so results are reproducible bit for bit
//! regardless of how trials are scheduled across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{awgn, compose_tx, SuperposConfig};
use crate::demod::{
    bandpass, correlate_bpsk, default_bpf_width_hz, demod_lora, reconstruct_and_cancel,
    segment_center_hz,
};
use crate::waveform::{gen_high_segment, gen_symbol, IqBuffer, LoraConfig};
use crate::{db_to_linear, linear_to_db, ChirpError, Result};

/// All simulated links run at the same nominal bandwidth; baseband error
/// rates do not depend on its value.
const BANDWIDTH_HZ: f64 = 125_000.0;

/// Skip the per-symbol waveform cache when it would exceed this size.
const SYMBOL_CACHE_LIMIT_BYTES: usize = 64 << 20;

/// One Monte Carlo operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Layer geometry and power ratio.
    pub superpos: SuperposConfig,
    /// Baseline SNR in dB; `inf` disables noise.
    pub gamma_db: f64,
    /// Number of Monte Carlo trials.
    pub trials: u64,
    /// Master seed; trial `t` uses RNG stream `t` under this seed.
    pub master_seed: u64,
    /// Receiver oversampling factor.
    pub beta: usize,
}

/// Outcome of a single trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    /// The dechirp-and-DFT detector recovered the transmitted symbol.
    pub symbol_ok: bool,
    /// The cancellation-plus-correlator chain recovered the transmitted bit.
    pub bit_ok: bool,
}

/// Aggregated error counts for one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRatePoint {
    /// Baseline SNR of the scenario, dB.
    pub gamma_db: f64,
    /// Power ratio of the scenario, dB.
    pub kappa_db: f64,
    /// Trials run.
    pub trials: u64,
    /// Low-SF symbol decision errors.
    pub symbol_errors: u64,
    /// Superposed-layer bit decision errors.
    pub bit_errors: u64,
}

impl ErrorRatePoint {
    /// Symbol error rate estimate.
    pub fn ser(&self) -> f64 {
        self.symbol_errors as f64 / self.trials as f64
    }

    /// Bit error rate estimate.
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.trials as f64
    }

    /// Binomial standard error of [`Self::ser`].
    pub fn ser_stderr(&self) -> f64 {
        binomial_stderr(self.ser(), self.trials)
    }

    /// Binomial standard error of [`Self::ber`].
    pub fn ber_stderr(&self) -> f64 {
        binomial_stderr(self.ber(), self.trials)
    }

    /// Fewer than 10 symbol errors: the binomial standard error is not a
    /// trustworthy confidence measure for [`Self::ser`].
    pub fn ser_low_confidence(&self) -> bool {
        self.symbol_errors < 10
    }

    /// Fewer than 10 bit errors: same caveat for [`Self::ber`].
    pub fn ber_low_confidence(&self) -> bool {
        self.bit_errors < 10
    }
}

fn binomial_stderr(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Receiver options that deviate from the default chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Skip the correlator's bandpass prefilter (the default receiver).
    pub bypass_bpf: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { bypass_bpf: true }
    }
}

/// Precomputed waveforms and validated parameters for one scenario.
///
/// Construction performs all validation, so the per-trial path is
/// infallible afterwards.
pub struct SimContext {
    cfg_low: LoraConfig,
    superpos: SuperposConfig,
    gamma: f64,
    seed: u64,
    template: IqBuffer,
    low_symbols: Option<Vec<IqBuffer>>,
    bpf: Option<(f64, f64, f64)>,
}

impl SimContext {
    /// Builds the context for the default receiver chain.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::new_with(scenario, &SimOptions::default())
    }

    /// Builds the context with explicit receiver options.
    pub fn new_with(scenario: &Scenario, options: &SimOptions) -> Result<Self> {
        if scenario.trials == 0 {
            return Err(ChirpError::InvalidConfig("trials must be at least 1".into()));
        }
        let gamma = db_to_linear(scenario.gamma_db);
        if !(gamma > 0.0) {
            return Err(ChirpError::Domain(format!(
                "gamma {} dB is not a usable SNR",
                scenario.gamma_db
            )));
        }
        let superpos = scenario.superpos;
        let n_s = superpos.n_s();
        let cfg_low = LoraConfig::new(superpos.sf_low(), BANDWIDTH_HZ, scenario.beta)?;
        let cfg_high = LoraConfig::new(superpos.sf_high(), BANDWIDTH_HZ, scenario.beta)?;
        let template = gen_high_segment(&cfg_high, &cfg_low, n_s)?;
        let n = cfg_low.n();
        let cache_bytes = n * cfg_low.total_samples() * std::mem::size_of::<num_complex::Complex64>();
        let low_symbols = if cache_bytes <= SYMBOL_CACHE_LIMIT_BYTES {
            Some((0..n).map(|s| gen_symbol(&cfg_low, s)).collect::<Result<_>>()?)
        } else {
            None
        };
        let bpf = if options.bypass_bpf {
            None
        } else {
            Some((
                segment_center_hz(&cfg_low, &cfg_high, n_s),
                default_bpf_width_hz(&cfg_low, &cfg_high),
                cfg_low.sample_rate(),
            ))
        };
        Ok(Self {
            cfg_low,
            superpos,
            gamma,
            seed: scenario.master_seed,
            template,
            low_symbols,
            bpf,
        })
    }

    /// Runs trial `trial`: draw symbol and bit, compose, add noise,
    /// demodulate, cancel, correlate.
    ///
    /// The canceller is fed the transmitted symbol (ideal reconstruction),
    /// so the bit decision isolates correlator performance from low-layer
    /// symbol errors. With the superposed layer disabled (`kappa` infinite)
    /// there is no bit to decide and `bit_ok` is reported as true.
    pub fn run_trial(&self, trial: u64) -> TrialOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        let n = self.cfg_low.n();
        let s = rng.random_range(0..n);
        let bit = rng.random_range(0..2u8);
        let stored;
        let low_symbol = match &self.low_symbols {
            Some(cache) => &cache[s],
            None => {
                stored = gen_symbol(&self.cfg_low, s).expect("symbol index in range");
                &stored
            }
        };
        let tx = compose_tx(low_symbol, &self.template, bit, &self.superpos)
            .expect("layers share shape by construction");
        let rx = awgn(&tx, self.gamma, &mut rng).expect("gamma validated at construction");
        let detected = demod_lora(&rx, &self.cfg_low).expect("rx shape fixed by construction");
        let symbol_ok = detected.s_hat == s;
        let bit_ok = if self.superpos.kappa().is_infinite() {
            true
        } else {
            let residual = reconstruct_and_cancel(&rx, s, &self.cfg_low)
                .expect("rx shape fixed by construction");
            let residual = match self.bpf {
                Some((center, width, fs)) => {
                    bandpass(&residual, center, width, fs).expect("filter params validated")
                }
                None => residual,
            };
            let (bit_hat, _) = correlate_bpsk(&residual, &self.template)
                .expect("residual and template share shape");
            bit_hat == bit
        };
        TrialOutcome { symbol_ok, bit_ok }
    }
}

/// Runs a single trial of a scenario. Convenience wrapper that builds the
/// context each call; use [`SimContext`] directly for many trials.
pub fn run_trial(scenario: &Scenario, trial: u64) -> Result<TrialOutcome> {
    Ok(SimContext::new(scenario)?.run_trial(trial))
}

/// Runs every scenario with the default receiver chain.
pub fn sweep(scenarios: &[Scenario]) -> Result<Vec<ErrorRatePoint>> {
    sweep_with(scenarios, &SimOptions::default())
}

/// Runs every scenario, parallelizing trials across the current rayon
/// thread pool. Counts are exact sums over per-trial outcomes, so the
/// result is independent of thread count and scheduling.
pub fn sweep_with(scenarios: &[Scenario], options: &SimOptions) -> Result<Vec<ErrorRatePoint>> {
    scenarios
        .iter()
        .map(|sc| {
            let ctx = SimContext::new_with(sc, options)?;
            let (symbol_errors, bit_errors) = (0..sc.trials)
                .into_par_iter()
                .map(|t| {
                    let out = ctx.run_trial(t);
                    (u64::from(!out.symbol_ok), u64::from(!out.bit_ok))
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            Ok(ErrorRatePoint {
                gamma_db: sc.gamma_db,
                kappa_db: linear_to_db(sc.superpos.kappa()),
                trials: sc.trials,
                symbol_errors,
                bit_errors,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{ber_bpsk, eff_snr_high, ser_lora};
    use approx::assert_abs_diff_eq;

    fn superpos(kappa_db: f64) -> SuperposConfig {
        SuperposConfig::new(7, 12, 1984, db_to_linear(kappa_db)).unwrap()
    }

    fn scenario() -> Scenario {
        Scenario {
            superpos: superpos(6.0),
            gamma_db: -6.0,
            trials: 400,
            master_seed: 9,
            beta: 2,
        }
    }

    #[test]
    fn sweep_is_thread_count_invariant() {
        let sc = scenario();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| sweep(std::slice::from_ref(&sc)).unwrap())
        };
        let single = run(1);
        let eight = run(8);
        assert_eq!(single, eight);
        // and both agree with a plain sequential accumulation
        let ctx = SimContext::new(&sc).unwrap();
        let mut se = 0u64;
        let mut be = 0u64;
        for t in 0..sc.trials {
            let o = ctx.run_trial(t);
            se += u64::from(!o.symbol_ok);
            be += u64::from(!o.bit_ok);
        }
        assert_eq!(single[0].symbol_errors, se);
        assert_eq!(single[0].bit_errors, be);
    }

    #[test]
    fn repeated_trials_are_reproducible() {
        let sc = scenario();
        let ctx = SimContext::new(&sc).unwrap();
        for t in [0u64, 1, 17, 399] {
            assert_eq!(ctx.run_trial(t), ctx.run_trial(t));
        }
        assert_eq!(run_trial(&sc, 3).unwrap(), ctx.run_trial(3));
    }

    #[test]
    fn noiseless_link_is_error_free() {
        let mut sc = scenario();
        sc.gamma_db = f64::INFINITY;
        sc.trials = 100;
        let point = &sweep(std::slice::from_ref(&sc)).unwrap()[0];
        assert_eq!(point.symbol_errors, 0);
        assert_eq!(point.bit_errors, 0);
        assert_abs_diff_eq!(point.ser(), 0.0);
        assert_abs_diff_eq!(point.ber(), 0.0);
    }

    #[test]
    fn noiseless_round_trip_all_bits_spot_symbols() {
        let mut sc = scenario();
        sc.gamma_db = f64::INFINITY;
        sc.superpos = superpos(0.0); // strongest superposed layer
        let ctx = SimContext::new(&sc).unwrap();
        for t in 0..64 {
            let o = ctx.run_trial(t);
            assert!(o.symbol_ok && o.bit_ok, "trial {t}");
        }
    }

    #[test]
    fn disabled_high_layer_reports_zero_bit_errors() {
        let mut sc = scenario();
        sc.superpos = superpos(f64::INFINITY);
        sc.gamma_db = -10.0;
        sc.trials = 300;
        let point = &sweep(std::slice::from_ref(&sc)).unwrap()[0];
        assert_eq!(point.bit_errors, 0);
        assert!(point.symbol_errors > 0); // SER is a few percent at -10 dB
    }

    #[test]
    fn guess_limit_reached_far_below_sensitivity() {
        let mut sc = scenario();
        sc.superpos = superpos(f64::INFINITY);
        sc.beta = 1;
        sc.master_seed = 23;
        sc.trials = 3000;

        sc.gamma_db = -30.0;
        let point = &sweep(std::slice::from_ref(&sc)).unwrap()[0];
        let theory = ser_lora(db_to_linear(-30.0), 7).unwrap();
        let tol = 3.0 * binomial_stderr(theory, sc.trials);
        assert!(
            (point.ser() - theory).abs() < tol,
            "ser {} vs theory {theory} (3 sigma = {tol})",
            point.ser()
        );

        sc.gamma_db = -45.0;
        let point = &sweep(std::slice::from_ref(&sc)).unwrap()[0];
        let guess = 127.0 / 128.0;
        let tol = 3.0 * binomial_stderr(guess, sc.trials);
        assert!(
            (point.ser() - guess).abs() < tol,
            "ser {} vs guess limit {guess} (3 sigma = {tol})",
            point.ser()
        );
    }

    #[test]
    fn bit_error_rate_matches_q_function() {
        // Operating point chosen for BER near 5e-2 so 20k trials give a
        // tight interval: gamma_h = gamma/kappa * beta * N ~ 1.353.
        let sc = Scenario {
            superpos: superpos(22.77),
            gamma_db: 0.0,
            trials: 20_000,
            master_seed: 41,
            beta: 2,
        };
        let point = &sweep(std::slice::from_ref(&sc)).unwrap()[0];
        let gamma_h = eff_snr_high(
            db_to_linear(sc.gamma_db),
            sc.superpos.kappa(),
            sc.beta,
            128,
        )
        .unwrap();
        let theory = ber_bpsk(gamma_h).unwrap();
        let tol = 3.0 * binomial_stderr(theory, sc.trials);
        assert!(
            (point.ber() - theory).abs() < tol,
            "ber {} vs theory {theory} (3 sigma = {tol})",
            point.ber()
        );
    }

    #[test]
    fn bandpass_chain_survives_noiseless_round_trip() {
        let mut sc = scenario();
        sc.gamma_db = f64::INFINITY;
        sc.superpos = superpos(12.0);
        sc.beta = 4;
        sc.trials = 50;
        let options = SimOptions { bypass_bpf: false };
        let point = &sweep_with(std::slice::from_ref(&sc), &options).unwrap()[0];
        assert_eq!(point.symbol_errors, 0);
        assert_eq!(point.bit_errors, 0);
    }

    #[test]
    fn scenario_validation_rejects_bad_fields() {
        // Layer geometry and kappa are validated when the SuperposConfig is
        // built; the scenario level owns trials, gamma, and beta.
        let base = scenario();
        let mut sc = base.clone();
        sc.trials = 0;
        assert!(SimContext::new(&sc).is_err());
        sc = base.clone();
        sc.gamma_db = f64::NEG_INFINITY;
        assert!(SimContext::new(&sc).is_err());
        sc = base.clone();
        sc.gamma_db = f64::NAN;
        assert!(SimContext::new(&sc).is_err());
        sc = base.clone();
        sc.beta = 0;
        assert!(SimContext::new(&sc).is_err());
    }

    #[test]
    fn error_rate_point_statistics() {
        let p = ErrorRatePoint {
            gamma_db: 0.0,
            kappa_db: 0.0,
            trials: 400,
            symbol_errors: 100,
            bit_errors: 0,
        };
        assert_abs_diff_eq!(p.ser(), 0.25);
        assert_abs_diff_eq!(p.ser_stderr(), (0.25 * 0.75 / 400.0f64).sqrt());
        assert_abs_diff_eq!(p.ber(), 0.0);
        assert_abs_diff_eq!(p.ber_stderr(), 0.0);
    }
}
