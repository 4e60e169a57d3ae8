//! `ktcslds` command-line tool.
//!
//! Exit codes: 0 success (including `--help`), 1 usage error (bad flag,
//! invalid config), 2 runtime failure (I/O, numerical error).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigArgs;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ktcslds::Error> for CliError {
    fn from(e: ktcslds::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Compressive k-t video sensing with linear dynamical systems.
#[derive(Parser, Debug)]
#[command(name = "ktcslds", version)]
struct Cli {
    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a video from a random LDS with joint-sparse observation matrix.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Also write PGM frames.
        #[arg(long)]
        pgm: bool,
    },
    /// Render the beating-ring phantom.
    Phantom {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        pgm: bool,
    },
    /// Draw a k-t sampling pattern.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate k-t measurements of a video.
    Acquire {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Input video; the configured source when omitted.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Sampling pattern; drawn from the config when omitted.
        #[arg(long, value_name = "FILE")]
        pattern: Option<PathBuf>,
    },
    /// Estimate the state sequence from the invariant samples.
    States {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_name = "FILE")]
        measurements: PathBuf,
    },
    /// Recover the observation matrix by ADMM and synthesize the video.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_name = "FILE")]
        measurements: PathBuf,
        #[arg(long, value_name = "FILE")]
        states: PathBuf,
        /// Ground truth for SNR scoring.
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
        #[arg(long)]
        pgm: bool,
    },
    /// Full pipeline: source, sampling, states, ADMM, scoring.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        pgm: bool,
        /// Skip the binary video/matrix outputs.
        #[arg(long)]
        no_arrays: bool,
    },
    /// Run the pipeline over rates x densities x seeds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Comma-separated compression rates.
        #[arg(long, value_delimiter = ',', value_name = "R,..")]
        rates: Option<Vec<f64>>,
        /// Comma-separated densities.
        #[arg(long = "densities", value_delimiter = ',', value_name = "KIND,..")]
        densities: Option<Vec<String>>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', value_name = "S,..")]
        seeds: Option<Vec<u64>>,
    },
    /// Best rank-d approximation SNR of a video for d = 1..max-d.
    Curve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Input video; the configured source when omitted.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        max_d: usize,
    },
    /// Check a config, including the ADMM convergence condition.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("KTCSLDS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("KTCSLDS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    use commands as c;
    match cli.command {
        Command::Synth { cfg, out, pgm } => c::synth(&cfg, &out, pgm),
        Command::Phantom { cfg, out, pgm } => c::phantom(&cfg, &out, pgm),
        Command::Sample { cfg, out } => c::sample(&cfg, &out),
        Command::Acquire {
            cfg,
            out,
            input,
            pattern,
        } => c::acquire(&cfg, &out, input.as_deref(), pattern.as_deref()),
        Command::States { cfg, out, measurements } => c::states(&cfg, &out, &measurements),
        Command::Reconstruct {
            cfg,
            out,
            measurements,
            states,
            truth,
            pgm,
        } => c::reconstruct(&cfg, &out, &measurements, &states, truth.as_deref(), pgm),
        Command::Run {
            cfg,
            out,
            pgm,
            no_arrays,
        } => c::run(&cfg, &out, pgm, !no_arrays),
        Command::Sweep {
            cfg,
            out,
            rates,
            densities,
            seeds,
        } => c::sweep(&cfg, &out, rates, densities, seeds),
        Command::Curve {
            cfg,
            out,
            input,
            max_d,
        } => c::curve(&cfg, &out, input.as_deref(), max_d),
        Command::Validate { cfg } => c::validate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = init_threads().and_then(|()| dispatch(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
