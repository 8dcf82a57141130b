//! `sparse-diarize` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "sparse-diarize",
    version,
    about = "Overlap-aware speaker diarization by sparse factorization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the singular-value spectrum, its knee and the speaker budget.
    EstimateK {
        /// EMBSIG01 or CSV embedding signal.
        signal: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sensitivity: f64,
    },
    /// Factorize a signal and write an RTTM plus `<out stem>.loss.csv`.
    Diarize(DiarizeArgs),
    /// Score a hypothesis RTTM against a reference RTTM.
    Eval {
        reference: PathBuf,
        hypothesis: PathBuf,
        /// Timeline length in seconds; defaults to the later of the two last segment ends per file.
        #[arg(long)]
        duration: Option<f64>,
        /// Seconds excluded on each side of every reference boundary.
        #[arg(long, default_value_t = 0.0)]
        collar: f64,
    },
    /// Write a synthetic signal and its ground-truth RTTM.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct DiarizeArgs {
    /// EMBSIG01 or CSV embedding signal.
    signal: PathBuf,
    /// Output RTTM path.
    out: PathBuf,
    /// Speaker budget; estimated from the spectrum when absent.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    k: Option<u32>,
    /// Kneedle sensitivity used when estimating k.
    #[arg(long, default_value_t = 1.0)]
    sensitivity: f64,
    /// Recording id written into the RTTM; defaults to the signal file stem.
    #[arg(long)]
    file_id: Option<String>,
    /// Print a loss line on stderr every this many iterations (0 = never).
    #[arg(long, default_value_t = 250)]
    progress_every: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args, Debug)]
struct HyperArgs {
    #[arg(long, default_value_t = 0.3366)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.2424)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.06)]
    lambda3: f64,
    #[arg(long, default_value_t = 0.01)]
    lr_psi: f64,
    #[arg(long, default_value_t = 0.01)]
    lr_a: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    rel_tol: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random starts; the lowest final loss wins.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Disk)]
    basis_projection: ProjectionArg,
    #[arg(long, value_enum, default_value_t = ShrinkArg::Preconditioned)]
    shrink_step: ShrinkArg,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Activation level at which a speaker counts as active.
    #[arg(long, default_value_t = 0.4)]
    threshold: f64,
    #[arg(long, default_value_t = 2)]
    min_segment_steps: usize,
    /// Speakers below this fraction of the largest row mass are dropped.
    #[arg(long, default_value_t = 0.05)]
    min_fraction: f64,
    /// Basis columns at least this cosine-similar decode as one speaker.
    #[arg(long, default_value_t = 0.8)]
    merge_cosine: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output prefix; writes `<prefix>.embsig` (or `.csv`) and `<prefix>.rttm`.
    prefix: PathBuf,
    /// key=value scenario file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Embsig)]
    format: FormatArg,
    #[arg(long)]
    num_speakers: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    num_steps: Option<usize>,
    #[arg(long)]
    step_seconds: Option<f64>,
    #[arg(long)]
    window_seconds: Option<f64>,
    #[arg(long)]
    mean_turn_steps: Option<usize>,
    #[arg(long)]
    overlap_fraction: Option<f64>,
    #[arg(long)]
    silence_fraction: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    orthogonal: Option<bool>,
    #[arg(long)]
    mix_weight: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProjectionArg {
    Disk,
    Normalize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ShrinkArg {
    Preconditioned,
    Nominal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Embsig,
    Csv,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERIC: u8 = 4;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }
}

impl From<sparse_diarize::Error> for Failure {
    fn from(e: sparse_diarize::Error) -> Self {
        use sparse_diarize::Error as E;
        let code = match e {
            E::InvalidArgument(_) => Self::USAGE,
            E::Diverged { .. } => Self::NUMERIC,
            _ => Self::IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SPARSE_DIARIZE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::usage(format!(
            "SPARSE_DIARIZE_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot size thread pool: {e}")))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "recording".into())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::EstimateK { signal, sensitivity } => commands::estimate_k(&signal, sensitivity),
        Command::Diarize(args) => commands::diarize(&args),
        Command::Eval {
            reference,
            hypothesis,
            duration,
            collar,
        } => commands::eval(&reference, &hypothesis, duration, collar),
        Command::Simulate(args) => commands::simulate(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
