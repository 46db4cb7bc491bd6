//! Command-line pipeline: `synth → extract → fit → report`, plus `rayleigh`.
//!
//! Each subcommand is also a plain function taking a [`Context`] and a resolved
//! [`RunConfig`], which is what the binary calls after parsing flags.

pub mod commands;
pub mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use xfield::spectral::DelayRefinement;
use xfield::{Execution, Window};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] xfield::Error),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    /// 1 for numerical failures, 2 for I/O and configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_domain() => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

/// Where and how a command runs.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub execution: Execution,
    /// RFC 3339 timestamp recorded in manifests.
    pub timestamp: String,
}

impl Context {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Context {
            out_dir: out_dir.into(),
            execution: Execution::default(),
            timestamp: timestamp(),
        }
    }
}

/// `SOURCE_DATE_EPOCH` when set (reproducible manifests), else the current time.
pub fn timestamp() -> String {
    use chrono::{DateTime, SecondsFormat, Utc};
    let when = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    when.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Parser)]
#[command(name = "xfield", version, about = "Near/far-field UPA channel toolkit")]
pub struct Cli {
    /// Seed for noise, position jitter and fit restarts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize per-element CTFs.
    Synth(SynthArgs),
    /// CTF → CIR → per-element delay, gain and phase.
    Extract(ExtractArgs),
    /// Fit the cross-field path loss model to observations.
    Fit(FitArgs),
    /// Surfaces, phase tables and field-region assessment for plotting.
    Report(ReportArgs),
    /// Rayleigh distance, region and planar phase error for a geometry.
    Rayleigh(RayleighArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GeometryArgs {
    /// Preset array: 1 = 16×16, 2 = 32×32, 3 = 64×64 (0.5 mm spacing, 0.86 m).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub case: Option<u8>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub spacing_m: Option<f64>,
    /// Array centre to receiver distance.
    #[arg(long)]
    pub d0_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_rad: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub f_start_hz: Option<f64>,
    #[arg(long)]
    pub f_stop_hz: Option<f64>,
    #[arg(long)]
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Element pattern exponent along x.
    #[arg(long)]
    pub qx: Option<f64>,
    /// Element pattern exponent along z.
    #[arg(long)]
    pub qz: Option<f64>,
    /// Add complex Gaussian noise at this SNR (dB, relative to the strongest element).
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Standard deviation of element position errors (m).
    #[arg(long)]
    pub jitter_m: Option<f64>,
    /// Gzip the CSV body.
    #[arg(long)]
    pub gzip: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// CTF manifest (JSON).
    pub input: PathBuf,
    /// rectangular or hann.
    #[arg(long)]
    pub window: Option<Window>,
    /// Reject elements whose peak is this many dB below the grid maximum.
    #[arg(long)]
    pub noise_floor_db: Option<f64>,
    /// quadratic or coherent_peak.
    #[arg(long, value_parser = parse_refinement)]
    pub refinement: Option<DelayRefinement>,
    #[arg(long)]
    pub gzip: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Observation manifest (JSON).
    pub input: PathBuf,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Observation manifest (JSON).
    pub input: PathBuf,
    /// Fit report from `fit`; enables the model surface.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub boundary_band: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RayleighArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Frequency for λ; defaults to the sweep centre.
    #[arg(long)]
    pub freq_hz: Option<f64>,
    #[arg(long)]
    pub boundary_band: Option<f64>,
}

fn parse_refinement(s: &str) -> Result<DelayRefinement, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "quadratic" => Ok(DelayRefinement::Quadratic),
        "coherent_peak" => Ok(DelayRefinement::CoherentPeak),
        _ => Err(format!("unknown refinement '{s}', expected quadratic or coherent_peak")),
    }
}

impl GeometryArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.case = self.case;
        c.rows = self.rows;
        c.cols = self.cols;
        c.spacing_m = self.spacing_m;
        c.d0_m = self.d0_m;
        c.theta_rad = self.theta_rad;
    }
}

impl SweepArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.f_start_hz = self.f_start_hz;
        c.f_stop_hz = self.f_stop_hz;
        c.n_points = self.n_points;
    }
}

impl Command {
    /// The options given as flags, as a config layer.
    pub fn flag_layer(&self) -> RunConfig {
        let mut c = RunConfig::default();
        match self {
            Command::Synth(a) => {
                a.geometry.apply(&mut c);
                a.sweep.apply(&mut c);
                c.qx = a.qx;
                c.qz = a.qz;
                c.snr_db = a.snr_db;
                c.jitter_m = a.jitter_m;
                c.gzip = a.gzip.then_some(true);
            }
            Command::Extract(a) => {
                c.window = a.window;
                c.noise_floor_db = a.noise_floor_db;
                c.refinement = a.refinement;
                c.gzip = a.gzip.then_some(true);
            }
            Command::Fit(a) => {
                c.max_iterations = a.max_iterations;
                c.tolerance = a.tolerance;
                c.restarts = a.restarts;
            }
            Command::Report(a) => {
                c.boundary_band = a.boundary_band;
            }
            Command::Rayleigh(a) => {
                a.geometry.apply(&mut c);
                a.sweep.apply(&mut c);
                c.freq_hz = a.freq_hz;
                c.boundary_band = a.boundary_band;
            }
        }
        c
    }
}

impl Cli {
    /// Defaults < preset < config file < flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let mut flags = self.command.flag_layer();
        flags.seed = self.seed;
        file.overlay(flags).with_preset()
    }

    pub fn context(&self) -> Context {
        let mut ctx = Context::new(&self.out_dir);
        if self.sequential {
            ctx.execution = Execution::Sequential;
        }
        ctx
    }
}

/// Runs the parsed command and prints its summary to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    let ctx = cli.context();
    match &cli.command {
        Command::Synth(_) => print!("{}", commands::synth(&ctx, &cfg)?),
        Command::Extract(a) => print!("{}", commands::extract(&ctx, &cfg, &a.input)?),
        Command::Fit(a) => print!("{}", commands::fit(&ctx, &cfg, &a.input)?),
        Command::Report(a) => print!("{}", commands::report(&ctx, &cfg, &a.input, a.fit.as_deref())?),
        Command::Rayleigh(_) => print!("{}", commands::rayleigh(&ctx, &cfg)?),
    }
    Ok(())
}
