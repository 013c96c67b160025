//! The `rapnet` command line. Parsing lives here; each subcommand is a
//! plain function in [`commands`] so it can be driven from tests.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure (non-finite values, failed gradient check).

pub mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autodiff::suite::Scope;
use crate::data::Role;
use crate::error::{Error, Result};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "RAPNET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rapnet", version, about = "Pansharpening with receptive-field adaptive convolution")]
pub struct Cli {
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,

    /// Seed for initialisation, data order and synthetic data (overrides train.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.lr=1e-3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Train,
    Test,
    All,
}

impl RoleArg {
    pub fn role(self) -> Option<Role> {
        match self {
            RoleArg::Train => Some(Role::Train),
            RoleArg::Test => Some(Role::Test),
            RoleArg::All => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Ops,
    Rapconv,
    Network,
    All,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::Ops => Scope::Ops,
            ScopeArg::Rapconv => Scope::Rapconv,
            ScopeArg::Network => Scope::Network,
            ScopeArg::All => Scope::All,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the `train` entries of a manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse one PAN/MS pair with a trained checkpoint.
    Fuse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pan: PathBuf,
        #[arg(long)]
        ms: PathBuf,
        /// Output array, `.npy` or `.rapt`.
        #[arg(long)]
        out: PathBuf,
        /// Inputs are divided by this before fusion and the output multiplied back.
        #[arg(long, default_value_t = 1.0)]
        radiometric_max: f64,
        /// Also write an 8-bit preview.
        #[arg(long)]
        png: Option<PathBuf>,
        /// Bands shown in the preview (1 or 3, comma separated).
        #[arg(long, value_delimiter = ',')]
        png_bands: Option<Vec<usize>>,
    },
    /// ERGAS, SAM, Q2n and SCC against references.
    EvalReduced {
        #[command(flatten)]
        inputs: EvalInputs,
        /// Fused rasters, paired in order with `--reference`.
        #[arg(long, num_args = 1.., conflicts_with_all = ["checkpoint", "manifest"])]
        fused: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        reference: Vec<PathBuf>,
        /// Resolution ratio for ERGAS when evaluating files.
        #[arg(long)]
        ratio: Option<usize>,
    },
    /// D_lambda, D_S and QNR without references.
    EvalFull {
        #[command(flatten)]
        inputs: EvalInputs,
        #[arg(long, num_args = 1.., conflicts_with_all = ["checkpoint", "manifest"])]
        fused: Vec<PathBuf>,
        #[arg(long = "ms-file", num_args = 1..)]
        ms: Vec<PathBuf>,
        #[arg(long = "pan-file", num_args = 1..)]
        pan: Vec<PathBuf>,
        #[arg(long)]
        ratio: Option<usize>,
    },
    /// Train the adaptive and the plain-convolution network from one seed and compare.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the gradients.
    Gradcheck {
        #[arg(long, value_enum, default_value = "all")]
        scope: ScopeArg,
        /// Number of seeds, starting at `--seed` (default 0).
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Build a reduced-resolution pair from an HRMS and a PAN raster.
    Simulate {
        #[arg(long)]
        hrms: PathBuf,
        #[arg(long)]
        pan: PathBuf,
        #[arg(long)]
        ratio: usize,
        #[arg(long)]
        out: PathBuf,
        /// Nyquist gain per band, or one value for all bands.
        #[arg(long, value_delimiter = ',')]
        gnyq: Option<Vec<f64>>,
        #[arg(long)]
        pan_gnyq: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        radiometric_max: f64,
        #[arg(long, value_enum, default_value = "train")]
        role: RoleArg,
    },
    /// Write a seeded synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Extra pairs tagged `test`.
        #[arg(long, default_value_t = 0)]
        test_count: usize,
        /// Reference side length in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        ratio: usize,
    },
}

#[derive(Debug, Args)]
pub struct EvalInputs {
    /// Fuse the manifest entries with this checkpoint first.
    #[arg(long, requires = "manifest")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub role: RoleArg,
    /// Directory for the JSON and CSV reports.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .try_init();
}

/// Run a parsed command inside a pool of the requested size.
pub fn execute(cli: Cli) -> Result<()> {
    init_logging(cli.verbose);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.threads > 0 {
        pool = pool.num_threads(cli.threads);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| commands::dispatch(cli.command, cli.seed))
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
