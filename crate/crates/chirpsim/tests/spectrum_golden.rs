//! Pins the SF7/SF12 interference spectrum to a frozen reference file and to
//! an independent direct evaluation that shares no code with the library
//! (raw phase accumulation plus an O(N^2) DFT instead of chirp tables and
//! the FFT).

use chirpsim::analysis::u_spectrum_bruteforce;
use chirpsim::waveform::LoraConfig;
use num_complex::Complex64;

const GOLDEN: &str = include_str!("data/u_spectrum_sf7_sf12_ns0.csv");

fn golden_magnitudes() -> Vec<f64> {
    let mut out = Vec::new();
    for (i, line) in GOLDEN.lines().enumerate() {
        if i == 0 {
            assert_eq!(line, "k,magnitude");
            continue;
        }
        let (k, mag) = line.split_once(',').expect("two columns");
        assert_eq!(k.parse::<usize>().unwrap(), i - 1);
        out.push(mag.parse::<f64>().unwrap());
    }
    out
}

/// Chirp sample from the raw quadratic phase, with no cycle folding: the
/// 2 pi ambiguity makes folding unnecessary when the phase goes straight
/// into sin/cos. Accuracy is a few ulps worse than the library's folded
/// form, which is why the comparison tolerance is 1e-9 rather than 1e-12.
fn direct_chirp(n_total: usize, s: f64, n: f64) -> Complex64 {
    let big_n = n_total as f64;
    let phase = std::f64::consts::TAU * (n * n / (2.0 * big_n) + (s / big_n - 0.5) * n);
    Complex64::from_polar(1.0, phase)
}

fn direct_spectrum(sf_low: u32, sf_high: u32, n_s: usize) -> Vec<f64> {
    let n_l = 1usize << sf_low;
    let n_h = 1usize << sf_high;
    let dechirped: Vec<Complex64> = (0..n_l)
        .map(|n| {
            let seg = direct_chirp(n_h, 0.0, (n_s + n) as f64);
            let ref_chirp = direct_chirp(n_l, 0.0, n as f64);
            ref_chirp.conj() * seg
        })
        .collect();
    let scale = 1.0 / (n_l as f64).sqrt();
    (0..n_l)
        .map(|k| {
            let bin: Complex64 = dechirped
                .iter()
                .enumerate()
                .map(|(n, y)| {
                    let w = -std::f64::consts::TAU * (k * n) as f64 / n_l as f64;
                    y * Complex64::from_polar(1.0, w)
                })
                .sum();
            bin.norm() * scale
        })
        .collect()
}

#[test]
fn bruteforce_matches_frozen_reference() {
    let low = LoraConfig::new(7, 125e3, 1).unwrap();
    let high = LoraConfig::new(12, 125e3, 1).unwrap();
    let mags = u_spectrum_bruteforce(&low, &high, 0, 0).unwrap();
    let golden = golden_magnitudes();
    assert_eq!(mags.len(), golden.len());
    for (k, (got, want)) in mags.iter().zip(&golden).enumerate() {
        assert!(
            (got - want).abs() < 1e-12,
            "bin {k}: {got} vs frozen {want}"
        );
    }
}

#[test]
fn frozen_reference_matches_independent_direct_sum() {
    let golden = golden_magnitudes();
    let direct = direct_spectrum(7, 12, 0);
    for (k, (want, got)) in golden.iter().zip(&direct).enumerate() {
        assert!(
            (got - want).abs() < 1e-9,
            "bin {k}: direct {got} vs frozen {want}"
        );
    }
}

#[test]
fn direct_sum_agrees_at_other_offsets() {
    let low = LoraConfig::new(7, 125e3, 1).unwrap();
    let high = LoraConfig::new(12, 125e3, 1).unwrap();
    for n_s in [992usize, 1984, 3968] {
        let mags = u_spectrum_bruteforce(&low, &high, n_s, 0).unwrap();
        let direct = direct_spectrum(7, 12, n_s);
        for (k, (got, want)) in mags.iter().zip(&direct).enumerate() {
            assert!(
                (got - want).abs() < 1e-9,
                "n_s = {n_s}, bin {k}: {got} vs direct {want}"
            );
        }
    }
}
