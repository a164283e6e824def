//! `scma`: validate, analyze, simulate and optimize SCMA codebooks from the shell.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage, parse or runtime error.

mod commands;
mod manifest;
mod range;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scma::channel::ChannelKind;
use scma::detector::MpaDomain;
use scma::optimizer::CrnPolicy;

#[derive(Parser, Debug)]
#[command(name = "scma", version, about = "SCMA codebook analysis, simulation and optimization")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SCMA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a codebook set's structure; prints a JSON report.
    Validate(ValidateArgs),
    /// Distance KPIs and the mutual-information lower bound.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo SER sweep.
    Simulate(SimulateArgs),
    /// Differential-evolution search over a structure template.
    Optimize(OptimizeArgs),
    /// List the built-in fixtures, optionally exporting them.
    Fixtures(FixturesArgs),
}

/// A list of values from `range::parse_list`.
#[derive(Clone, Debug)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    range::parse_list(s).map(Grid)
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Codebook JSON file, or `fixture:<id>`.
    #[arg(long)]
    codebook: String,
    /// Also check against a structure template (`6x4`, `12x6` or a JSON file).
    #[arg(long)]
    template: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    codebook: String,
    /// SNR grid in dB for the I_L profile, e.g. `-20:2:30`; empty for KPIs only.
    #[arg(long = "n0-grid-db", alias = "snr-grid-db", value_parser = parse_grid, allow_hyphen_values = true)]
    grid: Option<Grid>,
    /// Relative tolerance for kissing-number counts.
    #[arg(long, default_value_t = scma::metrics::DEFAULT_REL_TOL)]
    rel_tol: f64,
    /// Directory for kpi.json, il.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Channel {
    Awgn,
    Rayleigh,
}

impl From<Channel> for ChannelKind {
    fn from(c: Channel) -> Self {
        match c {
            Channel::Awgn => ChannelKind::Awgn,
            Channel::Rayleigh => ChannelKind::Rayleigh,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Detector {
    Mpa,
    Map,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Domain {
    Linear,
    Log,
    MaxLog,
}

impl From<Domain> for MpaDomain {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Linear => MpaDomain::Linear,
            Domain::Log => MpaDomain::Log,
            Domain::MaxLog => MpaDomain::MaxLog,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Crn {
    Fixed,
    PerGeneration,
}

impl From<Crn> for CrnPolicy {
    fn from(c: Crn) -> Self {
        match c {
            Crn::Fixed => CrnPolicy::Fixed,
            Crn::PerGeneration => CrnPolicy::PerGeneration,
        }
    }
}

#[derive(Args, Debug)]
pub struct MpaArgs {
    #[arg(long, default_value_t = 10)]
    mpa_iters: usize,
    #[arg(long, value_enum, default_value_t = Domain::Linear)]
    mpa_domain: Domain,
    /// Weight of the previous user-to-resource message.
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    codebook: String,
    #[arg(long, value_enum)]
    channel: Channel,
    /// Eb/N0 points in dB: `A:STEP:B`, `A:B`, single values, comma separated.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    ebno: Grid,
    /// Fixed number of frames per point.
    #[arg(long, conflicts_with = "target_errors")]
    frames: Option<u64>,
    /// Simulate until this many symbol errors per point.
    #[arg(long)]
    target_errors: Option<u64>,
    /// Frame cap per point in target-error mode.
    #[arg(long, default_value_t = 10_000_000, requires = "target_errors")]
    max_frames: u64,
    #[arg(long, value_enum, default_value_t = Detector::Mpa)]
    detector: Detector,
    #[command(flatten)]
    mpa: MpaArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV path; a manifest is written to `<path>.manifest.json`. Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// `6x4`, `12x6` or a template JSON file.
    #[arg(long, default_value = "6x4")]
    template: String,
    #[arg(long, value_enum, default_value_t = Channel::Awgn)]
    channel: Channel,
    /// Eb/N0 in dB at which SER is minimized.
    #[arg(long, allow_negative_numbers = true)]
    ebno: f64,
    /// Population size.
    #[arg(long, default_value_t = 20)]
    np: usize,
    /// Crossover rate.
    #[arg(long, default_value_t = 0.95)]
    cr: f64,
    /// Mutation scale.
    #[arg(long, default_value_t = 0.6)]
    f: f64,
    #[arg(long, default_value_t = 80)]
    max_iter: usize,
    #[arg(long, default_value_t = 20_000)]
    frames_per_eval: u64,
    /// Relative improvement below which the run counts as settled; 0 disables.
    #[arg(long, default_value_t = 0.02)]
    plateau_eps: f64,
    #[arg(long, default_value_t = 5)]
    plateau_window: usize,
    #[arg(long, value_enum, default_value_t = Crn::Fixed)]
    crn: Crn,
    #[command(flatten)]
    mpa: MpaArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for run.json, history.csv, codebook.json and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// No per-generation progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    /// Write every fixture as `<id>.json` into this directory.
    #[arg(long)]
    export: Option<PathBuf>,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<scma::Error> for Failure {
    fn from(e: scma::Error) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
