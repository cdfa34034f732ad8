//! `moqsdc`: rate sweeps, X-basis tables, protocol simulation and end-to-end
//! transmission.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 security abort,
//! 3 I/O failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Parameter file (`key = value` lines); built-in defaults otherwise
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; drawn from entropy and printed if absent
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout if absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Range {
    #[arg(long, default_value_t = 0.0)]
    pub d_min: f64,
    #[arg(long, default_value_t = 450.0)]
    pub d_max: f64,
    #[arg(long, default_value_t = 5.0)]
    pub d_step: f64,
    /// Pick the best signal intensity at every distance
    #[arg(long)]
    pub optimize_mu: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Secrecy rate and repeaterless bound against distance
    RateSweep {
        #[command(flatten)]
        range: Range,
    },
    /// X-basis preparation success against distance
    Xbasis {
        /// Maximum event intervals, comma separated
        #[arg(long = "t", value_delimiter = ',', required = true, num_args = 1..)]
        t_values: Vec<u64>,
        #[command(flatten)]
        range: Range,
    },
    /// Frames needed for X-basis preparation against distance
    Frames {
        #[arg(long = "t", value_delimiter = ',', required = true, num_args = 1..)]
        t_values: Vec<u64>,
        #[arg(long, default_value_t = 1e-10)]
        target_failure: f64,
        #[command(flatten)]
        range: Range,
    },
    /// Monte Carlo run of the quantum layer, sifting and estimation
    Simulate {
        #[arg(long, default_value_t = 1_000_000)]
        rounds: u64,
        #[arg(long, default_value_t = 50.0)]
        distance: f64,
        /// Worker threads; all cores if absent (results do not depend on it)
        #[arg(long)]
        workers: Option<usize>,
        /// Include every clicked round in the transcript
        #[arg(long)]
        dump_rounds: bool,
    },
    /// Sends a file frame by frame over the simulated link
    Transmit {
        #[arg(long)]
        plaintext: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        distance: f64,
        #[arg(long, default_value_t = 128)]
        frame_bits: usize,
        /// Initial pre-shared secret bits on each side
        #[arg(long, default_value_t = moqsdc::sim::frame::DEFAULT_POOL_BITS)]
        pool_bits: usize,
        #[arg(long)]
        workers: Option<usize>,
        /// Writes each frame's published data as `.moqf` and `.hex` files here
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        /// Writes Bob's reconstruction of the file here
        #[arg(long)]
        recovered: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Abort(String),
    Io(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Abort(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "moqsdc", version, about = "Mixed-encoding QSDC analysis and simulation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let common = cli.common;
    let result = match cli.command {
        Command::RateSweep { range } => commands::rate_sweep(&common, &range),
        Command::Xbasis { t_values, range } => commands::xbasis(&common, &t_values, &range),
        Command::Frames {
            t_values,
            target_failure,
            range,
        } => commands::frames(&common, &t_values, target_failure, &range),
        Command::Simulate {
            rounds,
            distance,
            workers,
            dump_rounds,
        } => commands::simulate(&common, rounds, distance, workers, dump_rounds),
        Command::Transmit {
            plaintext,
            distance,
            frame_bits,
            pool_bits,
            workers,
            frames_dir,
            recovered,
        } => commands::transmit(
            &common,
            &commands::TransmitArgs {
                plaintext,
                distance,
                frame_bits,
                pool_bits,
                workers,
                frames_dir,
                recovered,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Abort(why) => eprintln!("aborted: {why}"),
                Failure::Io(e) => eprintln!("I/O error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
