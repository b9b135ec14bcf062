//! `abyssal` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "abyssal", version, about = "Lighting and backscatter compensation for deep-sea image sequences")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Seed for randomized steps; overrides the scene seed in `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the backscatter field from water-column frames.
    EstimateScatter(EstimateScatterArgs),
    /// Enhance every frame of a manifest.
    Enhance(EnhanceArgs),
    /// Print the median window needed for a contamination rate.
    SampleSize(SampleSizeArgs),
    /// Render a synthetic sequence with ground truth.
    Simulate(SimulateArgs),
    /// Score registered frames for consistency (and against truth).
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Decode {
    Auto,
    Linear,
    Srgb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Encode {
    Linear,
    Srgb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bits {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Png,
    Tiff,
}

#[derive(Debug, Args)]
struct EstimateScatterArgs {
    /// Manifest of water-column images (3 or more).
    #[arg(long)]
    water_manifest: PathBuf,
    /// Output TIFF; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Decode::Auto)]
    decode: Decode,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Scatter field TIFF written by `estimate-scatter`.
    #[arg(long)]
    scatter: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Temporal median window length (odd).
    #[arg(long, default_value_t = 7)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    spatial_radius: usize,
    #[arg(long, default_value_t = 8)]
    downsample: usize,
    /// Reference seafloor color, one value or r,g,b.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    reference: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Clamp enhanced values to [0, 1] before writing.
    #[arg(long)]
    clamp: bool,
    /// Estimate the factor once from the first window and reuse it.
    #[arg(long)]
    static_factor: bool,
    /// Also write each frame's factor field.
    #[arg(long)]
    dump_factors: bool,
    #[arg(long, value_enum, default_value_t = Decode::Auto)]
    decode: Decode,
    #[arg(long, value_enum, default_value_t = Format::Png)]
    output_format: Format,
    #[arg(long, value_enum, default_value_t = Bits::Sixteen)]
    output_bits: Bits,
    #[arg(long, value_enum, default_value_t = Encode::Linear)]
    output_encoding: Encode,
}

#[derive(Debug, Args)]
struct SampleSizeArgs {
    /// Fraction of contaminated samples per pixel, in (0, 0.5).
    #[arg(long)]
    contamination: f64,
    /// Acceptable probability that the median is contaminated.
    #[arg(long)]
    target: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Trajectory JSON; without it the scene pose is rendered once.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Manifest of the frames to score.
    #[arg(long)]
    frames: PathBuf,
    /// Registration JSON (homographies or correspondence maps).
    #[arg(long)]
    registration: PathBuf,
    /// Manifest of ground-truth albedo frames; adds scale-invariant RMSE.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Mosaic-space region mask (PNG).
    #[arg(long)]
    region: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Decode::Auto)]
    decode: Decode,
}

/// Exit codes shared by every subcommand.
const EXIT_IO: u8 = 1;
const EXIT_ARGUMENT: u8 = 2;
const EXIT_METRIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<abyssal::Error>() {
        Some(e) if e.is_input_output() => EXIT_IO,
        Some(abyssal::Error::Metric(_)) => EXIT_METRIC,
        Some(_) => EXIT_ARGUMENT,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_ARGUMENT,
    }
}

/// The error chain on one line, skipping causes already spelled out by
/// the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let run = || -> anyhow::Result<()> {
        if cli.threads > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
        }
        match &cli.command {
            Command::EstimateScatter(a) => commands::estimate_scatter(a),
            Command::Enhance(a) => commands::enhance(a),
            Command::SampleSize(a) => commands::sample_size(a),
            Command::Simulate(a) => commands::simulate(a, cli.seed),
            Command::Evaluate(a) => commands::evaluate(a),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
