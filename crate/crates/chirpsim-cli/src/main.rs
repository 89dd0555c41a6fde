//! Command-line front end for the chirpsim library.
//!
//! Five subcommands emit CSV datasets: `spectrum` compares the brute-force
//! interference magnitudes with the stationary-phase prediction,
//! `spectrogram` renders short-time Fourier magnitudes of a chosen
//! waveform, `simulate` runs Monte Carlo error-rate sweeps with theory
//! overlays, `analyze` emits closed-form curves without simulation, and
//! `feasible` evaluates the operating-region constraints over a dB grid.
//!
//! Output goes to stdout, or with `--out` to a file accompanied by a
//! `<file>.manifest.json` sidecar recording the invocation. All CSV uses
//! a header row, line-feed endings, and shortest round-trip floats.

mod stft;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use chirpsim::analysis::{
    ber_bpsk, eff_snr_high, eff_snr_low, feasible_region, ser_lora, u_spectrum_bruteforce,
    u_spectrum_stationary, FeasibleParams,
};
use chirpsim::channel::{compose_tx, SuperposConfig};
use chirpsim::sim::{sweep_with, Scenario, SimOptions};
use chirpsim::waveform::{gen_high_segment, gen_symbol, LoraConfig, MAX_SF, MIN_SF};
use chirpsim::{db_to_linear, linear_to_db};

/// Bandwidth used where only bin indices matter; error rates and bin
/// magnitudes are invariant to it.
const DEFAULT_BANDWIDTH_HZ: f64 = 125_000.0;

/// Refuse dB grids beyond this many points.
const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Parser)]
#[command(
    name = "chirpsim",
    version,
    about = "Chirp-layered LoRa superposition simulator",
    after_help = "Monte Carlo worker count follows RAYON_NUM_THREADS; the default is the available parallelism. Results are byte-identical at any worker count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interference spectrum of a high-SF segment in the low-SF DFT bins
    Spectrum(SpectrumArgs),
    /// Short-time Fourier magnitudes of a selected waveform
    Spectrogram(SpectrogramArgs),
    /// Monte Carlo error-rate sweep with theory overlays
    Simulate(SimulateArgs),
    /// Closed-form error-rate curves without simulation
    Analyze(AnalyzeArgs),
    /// Feasibility verdicts over a gamma/kappa grid
    Feasible(FeasibleArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    /// Spreading factor of the legacy low-rate layer
    #[arg(long, default_value_t = 7)]
    sf_low: u32,

    /// Spreading factor of the superposed high-rate layer
    #[arg(long, default_value_t = 12)]
    sf_high: u32,

    /// Segment offset n_s in base-rate samples (default: centered)
    #[arg(long)]
    offset: Option<usize>,

    /// High-SF symbol index carried by the segment
    #[arg(long, default_value_t = 0)]
    symbol: usize,

    /// Write the CSV here, with a .manifest.json sidecar
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WaveformKind {
    /// Single low-SF symbol
    Low,
    /// High-SF segment aligned to the low-SF window
    Segment,
    /// Low symbol plus the power-scaled, BPSK-signed segment
    Composite,
}

#[derive(Args)]
struct SpectrogramArgs {
    /// Waveform to render
    #[arg(long, value_enum, default_value_t = WaveformKind::Low)]
    waveform: WaveformKind,

    /// Spreading factor of the legacy low-rate layer
    #[arg(long, default_value_t = 7)]
    sf_low: u32,

    /// Spreading factor of the superposed high-rate layer
    #[arg(long, default_value_t = 12)]
    sf_high: u32,

    /// Segment offset n_s in base-rate samples (default: centered)
    #[arg(long)]
    offset: Option<usize>,

    /// Low-SF symbol index
    #[arg(long, default_value_t = 0)]
    symbol: usize,

    /// Superposed bit for the composite waveform
    #[arg(long, default_value_t = 0)]
    bit: u8,

    /// Power ratio kappa in dB for the composite waveform
    #[arg(long, default_value = "6", allow_hyphen_values = true)]
    kappa_db: String,

    /// Oversampling factor
    #[arg(long, default_value_t = 16)]
    beta: usize,

    /// STFT window length in samples (power of two)
    #[arg(long, default_value_t = 64)]
    window: usize,

    /// STFT hop between frame starts in samples
    #[arg(long, default_value_t = 16)]
    hop: usize,

    /// Signal bandwidth in Hz, sets the time and frequency axes
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH_HZ, allow_negative_numbers = true)]
    bandwidth_hz: f64,

    /// Write the CSV here, with a .manifest.json sidecar
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Spreading factor of the legacy low-rate layer
    #[arg(long, default_value_t = 7)]
    sf_low: u32,

    /// Spreading factor of the superposed high-rate layer
    #[arg(long, default_value_t = 12)]
    sf_high: u32,

    /// Segment offset n_s in base-rate samples (default: centered)
    #[arg(long)]
    offset: Option<usize>,

    /// Baseline SNR gamma in dB: scalar, start:stop:step, or inf
    #[arg(long, allow_hyphen_values = true)]
    gamma_db: String,

    /// Power ratio kappa in dB: scalar, start:stop:step, or inf
    #[arg(long, default_value = "inf", allow_hyphen_values = true)]
    kappa_db: String,

    /// Monte Carlo trials per grid point
    #[arg(long, default_value_t = 10_000)]
    trials: u64,

    /// Master seed; trial t uses RNG stream t under this seed
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Oversampling factor
    #[arg(long, default_value_t = 16)]
    beta: usize,

    /// Skip the correlator's bandpass prefilter
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    bypass_bpf: bool,

    /// Write the CSV here, with a .manifest.json sidecar
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalyzeKind {
    /// Low-layer symbol error rate against the effective SNR
    Ser,
    /// Superposed-layer bit error rate against the correlator SNR
    Ber,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Curve to emit
    #[arg(long, value_enum)]
    kind: AnalyzeKind,

    /// Spreading factor of the legacy low-rate layer
    #[arg(long, default_value_t = 7)]
    sf_low: u32,

    /// Baseline SNR gamma in dB: scalar, start:stop:step, or inf
    #[arg(long, allow_hyphen_values = true)]
    gamma_db: String,

    /// Power ratio kappa in dB (default: inf for ser, 0 for ber)
    #[arg(long, allow_hyphen_values = true)]
    kappa_db: Option<String>,

    /// Oversampling factor entering the correlator SNR
    #[arg(long, default_value_t = 16)]
    beta: usize,

    /// Write the CSV here, with a .manifest.json sidecar
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeasibleArgs {
    /// Baseline SNR grid in dB: scalar or start:stop:step
    #[arg(long, default_value = "-20:10:0.25", allow_hyphen_values = true)]
    gamma_db: String,

    /// Power ratio grid in dB: scalar or start:stop:step
    #[arg(long, default_value = "0:40:0.25", allow_hyphen_values = true)]
    kappa_db: String,

    /// Demodulation threshold on the effective low-layer SNR, dB
    #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
    lora_threshold_db: f64,

    /// Highest acceptable bit error rate on the superposed layer
    #[arg(long, default_value_t = 1e-5)]
    ber_target: f64,

    /// Oversampling factor entering the correlator SNR
    #[arg(long, default_value_t = 16)]
    beta: usize,

    /// Spreading factor of the legacy low-rate layer
    #[arg(long, default_value_t = 7)]
    sf_low: u32,

    /// Write the CSV here, with a .manifest.json sidecar
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a, &argv),
        Command::Spectrogram(a) => cmd_spectrogram(a, &argv),
        Command::Simulate(a) => cmd_simulate(a, &argv),
        Command::Analyze(a) => cmd_analyze(a, &argv),
        Command::Feasible(a) => cmd_feasible(a, &argv),
    }
}

fn cmd_spectrum(args: &SpectrumArgs, argv: &[String]) -> Result<()> {
    let cfg_low = LoraConfig::new(args.sf_low, DEFAULT_BANDWIDTH_HZ, 1)?;
    let cfg_high = LoraConfig::new(args.sf_high, DEFAULT_BANDWIDTH_HZ, 1)?;
    let n_s = resolve_offset(args.sf_low, args.sf_high, args.offset)?;
    let mags = u_spectrum_bruteforce(&cfg_low, &cfg_high, n_s, args.symbol)?;
    let pred = u_spectrum_stationary(&cfg_low, &cfg_high, n_s, args.symbol)?;
    let mut rows = Vec::with_capacity(mags.len());
    for (k, &m) in mags.iter().enumerate() {
        let member = pred.in_block(k);
        let predicted = if member { pred.flat_level } else { 0.0 };
        rows.push(format!("{k},{},{},{}", fnum(m), fnum(predicted), u8::from(member)));
    }
    emit(
        "k,mag_bruteforce,mag_stationary_prediction,in_block_K",
        &rows,
        args.out.as_deref(),
        "spectrum",
        argv,
        None,
    )
}

fn cmd_spectrogram(args: &SpectrogramArgs, argv: &[String]) -> Result<()> {
    let cfg_low = LoraConfig::new(args.sf_low, args.bandwidth_hz, args.beta)?;
    let samples = match args.waveform {
        WaveformKind::Low => gen_symbol(&cfg_low, args.symbol)?.samples,
        WaveformKind::Segment => {
            let cfg_high = LoraConfig::new(args.sf_high, args.bandwidth_hz, args.beta)?;
            let n_s = resolve_offset(args.sf_low, args.sf_high, args.offset)?;
            gen_high_segment(&cfg_high, &cfg_low, n_s)?.samples
        }
        WaveformKind::Composite => {
            let cfg_high = LoraConfig::new(args.sf_high, args.bandwidth_hz, args.beta)?;
            let n_s = resolve_offset(args.sf_low, args.sf_high, args.offset)?;
            let kappa = db_to_linear(parse_db(&args.kappa_db).context("invalid --kappa-db")?);
            let superpos = SuperposConfig::new(args.sf_low, args.sf_high, n_s, kappa)?;
            let low = gen_symbol(&cfg_low, args.symbol)?;
            let segment = gen_high_segment(&cfg_high, &cfg_low, n_s)?;
            compose_tx(&low, &segment, args.bit, &superpos)?.samples
        }
    };
    let fs = cfg_low.sample_rate();
    let grid = stft::stft(&samples, args.window, args.hop)?;
    let mut rows = Vec::with_capacity(grid.frames.len() * args.window);
    for (f, frame) in grid.frames.iter().enumerate() {
        let t = fnum(grid.frame_time_s(f, fs));
        for (r, &m) in frame.iter().enumerate() {
            rows.push(format!("{f},{t},{r},{},{}", fnum(grid.row_freq_hz(r, fs)), fnum(m)));
        }
    }
    emit(
        "frame,time_s,bin,freq_hz,magnitude",
        &rows,
        args.out.as_deref(),
        "spectrogram",
        argv,
        None,
    )
}

fn cmd_simulate(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    check_sf("low", args.sf_low)?;
    check_sf("high", args.sf_high)?;
    let gammas = parse_grid(&args.gamma_db).context("invalid --gamma-db")?;
    let kappas = parse_grid(&args.kappa_db).context("invalid --kappa-db")?;
    let n_s = resolve_offset(args.sf_low, args.sf_high, args.offset)?;

    let mut scenarios = Vec::with_capacity(gammas.len() * kappas.len());
    let mut grid = Vec::with_capacity(scenarios.capacity());
    for &gamma_db in &gammas {
        for &kappa_db in &kappas {
            let superpos =
                SuperposConfig::new(args.sf_low, args.sf_high, n_s, db_to_linear(kappa_db))?;
            scenarios.push(Scenario {
                superpos,
                gamma_db,
                trials: args.trials,
                master_seed: args.seed,
                beta: args.beta,
            });
            grid.push((gamma_db, kappa_db));
        }
    }
    let points = sweep_with(&scenarios, &SimOptions { bypass_bpf: args.bypass_bpf })?;

    let mut rows = Vec::with_capacity(points.len());
    for (&(gamma_db, kappa_db), point) in grid.iter().zip(&points) {
        let (ser_theory, ber_theory) =
            theory_columns(gamma_db, kappa_db, args.sf_low, args.beta)?;
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            fnum(gamma_db),
            fnum(kappa_db),
            point.trials,
            fnum(point.ser()),
            fnum(point.ser_stderr()),
            fnum(point.ber()),
            fnum(point.ber_stderr()),
            fnum(ser_theory),
            fnum(ber_theory)
        ));
        if point.ser_low_confidence() {
            eprintln!(
                "note: gamma {gamma_db} dB, kappa {kappa_db} dB: {} symbol errors; ser is low-confidence below 10",
                point.symbol_errors
            );
        }
        if kappa_db.is_finite() && point.ber_low_confidence() {
            eprintln!(
                "note: gamma {gamma_db} dB, kappa {kappa_db} dB: {} bit errors; ber is low-confidence below 10",
                point.bit_errors
            );
        }
    }
    emit(
        "gamma_db,kappa_db,trials,ser,ser_stderr,ber,ber_stderr,ser_theory,ber_theory",
        &rows,
        args.out.as_deref(),
        "simulate",
        argv,
        Some(args.seed),
    )
}

/// Closed-form SER and BER for one operating point, matching the columns
/// the simulator is compared against. With the superposed layer disabled
/// (`kappa` infinite) no bit is transmitted and the BER column is 0.
fn theory_columns(gamma_db: f64, kappa_db: f64, sf_low: u32, beta: usize) -> Result<(f64, f64)> {
    let gamma = db_to_linear(gamma_db);
    let kappa = db_to_linear(kappa_db);
    let ser = ser_lora(eff_snr_low(gamma, kappa)?, sf_low)?;
    let ber = if kappa.is_infinite() {
        0.0
    } else {
        ber_bpsk(eff_snr_high(gamma, kappa, beta, 1usize << sf_low)?)?
    };
    Ok((ser, ber))
}

fn cmd_analyze(args: &AnalyzeArgs, argv: &[String]) -> Result<()> {
    check_sf("low", args.sf_low)?;
    let gammas = parse_grid(&args.gamma_db).context("invalid --gamma-db")?;
    let kappa_db = match &args.kappa_db {
        Some(s) => parse_db(s).context("invalid --kappa-db")?,
        None => match args.kind {
            AnalyzeKind::Ser => f64::INFINITY,
            AnalyzeKind::Ber => 0.0,
        },
    };
    let kappa = db_to_linear(kappa_db);
    let n_l = 1usize << args.sf_low;

    let mut rows = Vec::with_capacity(gammas.len());
    let header = match args.kind {
        AnalyzeKind::Ser => {
            for &gamma_db in &gammas {
                let gamma_eff = eff_snr_low(db_to_linear(gamma_db), kappa)?;
                let ser = ser_lora(gamma_eff, args.sf_low)?;
                rows.push(format!(
                    "{},{},{},{}",
                    fnum(gamma_db),
                    fnum(kappa_db),
                    fnum(linear_to_db(gamma_eff)),
                    fnum(ser)
                ));
            }
            "gamma_db,kappa_db,gamma_eff_db,ser_theory"
        }
        AnalyzeKind::Ber => {
            for &gamma_db in &gammas {
                let gamma_h = eff_snr_high(db_to_linear(gamma_db), kappa, args.beta, n_l)?;
                let ber = ber_bpsk(gamma_h)?;
                rows.push(format!(
                    "{},{},{},{}",
                    fnum(gamma_db),
                    fnum(kappa_db),
                    fnum(linear_to_db(gamma_h)),
                    fnum(ber)
                ));
            }
            "gamma_db,kappa_db,gamma_h_db,ber_theory"
        }
    };
    emit(header, &rows, args.out.as_deref(), "analyze", argv, None)
}

fn cmd_feasible(args: &FeasibleArgs, argv: &[String]) -> Result<()> {
    let gammas = parse_grid(&args.gamma_db).context("invalid --gamma-db")?;
    let kappas = parse_grid(&args.kappa_db).context("invalid --kappa-db")?;
    let params = FeasibleParams {
        lora_threshold_db: args.lora_threshold_db,
        ber_target: args.ber_target,
        beta: args.beta,
        sf_low: args.sf_low,
    };
    let cells = feasible_region(&gammas, &kappas, &params)?;
    let rows: Vec<String> = cells
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{}",
                fnum(c.gamma_db),
                fnum(c.kappa_db),
                u8::from(c.lora_ok),
                u8::from(c.high_ok),
                u8::from(c.feasible())
            )
        })
        .collect();
    emit(
        "gamma_db,kappa_db,lora_ok,high_ok,both_ok",
        &rows,
        args.out.as_deref(),
        "feasible",
        argv,
        None,
    )
}

/// Rejects spreading factors outside the supported range before any
/// power-of-two arithmetic uses them.
fn check_sf(label: &str, sf: u32) -> Result<()> {
    ensure!(
        (MIN_SF..=MAX_SF).contains(&sf),
        "{label} spreading factor {sf} outside {MIN_SF}..={MAX_SF}"
    );
    Ok(())
}

/// Explicit offset, or the centering default when none is given.
fn resolve_offset(sf_low: u32, sf_high: u32, offset: Option<usize>) -> Result<usize> {
    if let Some(n_s) = offset {
        return Ok(n_s);
    }
    ensure!(
        sf_high > sf_low,
        "high spreading factor {sf_high} must exceed low {sf_low}; cannot center the segment"
    );
    Ok(SuperposConfig::centered_offset(sf_low, sf_high))
}

/// Shortest round-trip decimal form of `v` (`0.25`, `1.5e-9`, `inf`).
fn fnum(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

/// Parses one dB value; `inf` is accepted where a mechanism can be
/// disabled, NaN never is.
fn parse_db(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| anyhow!("{s:?} is not a number"))?;
    ensure!(!v.is_nan(), "{s:?} is not a usable dB value");
    Ok(v)
}

/// Parses a dB grid: either a single scalar or `start:stop:step`, inclusive
/// of `stop` when it lands on the grid.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts[..] {
        [scalar] => Ok(vec![parse_db(scalar)?]),
        [start, stop, step] => {
            let a = parse_db(start)?;
            let b = parse_db(stop)?;
            let h = parse_db(step)?;
            ensure!(a.is_finite() && b.is_finite(), "grid endpoints must be finite");
            ensure!(h.is_finite() && h > 0.0, "grid step must be positive and finite");
            ensure!(b >= a, "grid stop {b} is below start {a}");
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            ensure!(count <= MAX_GRID_POINTS, "grid has {count} points; the limit is {MAX_GRID_POINTS}");
            Ok((0..count).map(|i| a + i as f64 * h).collect())
        }
        _ => bail!("expected a scalar or start:stop:step, got {s:?}"),
    }
}

/// Invocation record written next to every `--out` file.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: &'a [String],
    master_seed: Option<u64>,
    library_version: &'a str,
    created_unix_s: u64,
}

/// Writes the CSV to stdout, or to `out` plus a JSON manifest sidecar.
fn emit(
    header: &str,
    rows: &[String],
    out: Option<&Path>,
    command: &str,
    argv: &[String],
    master_seed: Option<u64>,
) -> Result<()> {
    let mut text =
        String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    match out {
        None => {
            use std::io::Write as _;
            if let Err(e) = std::io::stdout().write_all(text.as_bytes()) {
                // A closed pipe (`chirpsim ... | head`) is not a failure.
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e).context("writing CSV to stdout");
                }
            }
        }
        Some(path) => {
            std::fs::write(path, &text)
                .with_context(|| format!("writing {}", path.display()))?;
            let manifest = RunManifest {
                command,
                argv,
                master_seed,
                library_version: chirpsim::VERSION,
                created_unix_s: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            let sidecar = manifest_path(path);
            let body = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
            std::fs::write(&sidecar, body + "\n")
                .with_context(|| format!("writing {}", sidecar.display()))?;
        }
    }
    Ok(())
}

/// `results.csv` gets its manifest at `results.csv.manifest.json`.
fn manifest_path(csv: &Path) -> PathBuf {
    let mut os = csv.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}
