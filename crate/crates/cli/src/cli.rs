use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "photonstat", version, about = "Simulate, correlate and fit single-emitter photon statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a two-detector measurement described by a pipeline config.
    Simulate(SimulateArgs),
    /// Cross-correlate two timestamp files into a g² histogram.
    Correlate(CorrelateArgs),
    /// Fit a model to a histogram, series or spectrum file.
    Fit(FitArgs),
    /// Write an uncorrelated Poisson timestamp stream.
    Poisson(PoissonArgs),
    /// Convert timestamp files between binary (.pstm) and CSV.
    Convert(ConvertArgs),
    /// Run the built-in acceptance checks.
    Selftest(SelftestArgs),
    /// Re-run the command recorded in a manifest and verify output checksums.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Pipeline config (JSON).
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorrelateArgs {
    /// Channel A timestamps (.pstm, or .csv).
    pub a: PathBuf,
    /// Channel B timestamps.
    pub b: PathBuf,
    /// Bin width, ns.
    #[arg(long, default_value_t = 0.1)]
    pub bin_width: f64,
    /// Half range of the delay window, ns.
    #[arg(long, default_value_t = 100.0)]
    pub tau_max: f64,
    /// Background-correct with signal fraction S/(S+B).
    #[arg(long, conflicts_with = "snr")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Background-correct with signal-to-background ratio S/B.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    /// Histogram CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write a manifest with checksums.
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    G2,
    Saturation,
    Polarization,
    Spectrum,
}

impl FitKind {
    pub fn name(self) -> &'static str {
        match self {
            FitKind::G2 => "g2",
            FitKind::Saturation => "saturation",
            FitKind::Polarization => "polarization",
            FitKind::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(value_enum)]
    pub kind: FitKind,
    /// Histogram CSV (g2), series CSV (saturation, polarization) or spectrum CSV.
    pub data: PathBuf,
    /// g2: Gaussian detector response width, ns [default: 0.354].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drf_width: Option<f64>,
    /// g2: excitation power for the lifetime correction, mW.
    #[arg(long, requires = "psat")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    /// g2: saturation power for the lifetime correction, mW.
    #[arg(long, requires = "power")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psat: Option<f64>,
    /// saturation: 1/√e half-width of the focal spot, nm.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_width: Option<f64>,
    /// spectrum: number of Lorentzian lines [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npeaks: Option<usize>,
    /// Report JSON to write; printed to stdout when omitted.
    #[arg(long, short)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PoissonArgs {
    /// Count rate, counts/s.
    #[arg(long)]
    pub rate: f64,
    /// Acquisition time, s.
    #[arg(long)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Timestamp file to write (.pstm, or .csv).
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    /// Run a single criterion (1-10).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=10))]
    pub criterion: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// A command that can be recorded in a manifest and replayed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recorded {
    Simulate(SimulateArgs),
    Correlate(CorrelateArgs),
    Fit(FitArgs),
    Poisson(PoissonArgs),
    Convert(ConvertArgs),
}

impl Recorded {
    pub fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Recorded::Simulate(a) => vec![&mut a.config],
            Recorded::Correlate(a) => vec![&mut a.a, &mut a.b, &mut a.out],
            Recorded::Fit(a) => {
                let mut v = vec![&mut a.data];
                v.extend(a.out.as_mut());
                v
            }
            Recorded::Poisson(a) => vec![&mut a.out],
            Recorded::Convert(a) => vec![&mut a.input, &mut a.output],
        }
    }
}
