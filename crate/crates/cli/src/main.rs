//! `posw`: experiment runner for Proof-of-Swarm consensus.
//!
//! Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error,
//! 5 round cap exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posw_core::dataset::Format;
use posw_core::{ConsensusConfig, EarlyStopRule, LocalTiePolicy};

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "posw", version, about = "Proof-of-Swarm consensus experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run PoSw over every sample and write per-sample outcomes plus a summary.
    Run(RunArgs),
    /// Score PoSw and the baselines against ground truth.
    Compare(CompareArgs),
    /// Generate a synthetic prediction dataset.
    Gen(GenArgs),
    /// Run the distributed harness, optionally with faulty peers.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TiePolicyArg {
    LowestIndex,
    SeededRandom,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EarlyStopRuleArg {
    PeerMajority,
    ClassCountLiteral,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset file (.csv or .json)
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted
    #[arg(long, value_enum)]
    pub input_format: Option<FormatArg>,
    /// Rescale belief rows that miss the simplex instead of rejecting them
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    /// Seed for the seeded-random local tie policy
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run until full convergence instead of stopping at a strict majority
    #[arg(long)]
    pub no_early_stop: bool,
    /// Absolute tolerance for equal confidence sums
    #[arg(long, default_value_t = 1e-9)]
    pub tie_tolerance: f64,
    #[arg(long, value_enum, default_value = "lowest-index")]
    pub local_tie_policy: TiePolicyArg,
    /// Round cap multiplier (cap = factor * K * (K-1)); defaults to the peer count
    #[arg(long)]
    pub round_cap_factor: Option<usize>,
    #[arg(long, value_enum, default_value = "peer-majority")]
    pub early_stop_rule: EarlyStopRuleArg,
}

impl ConsensusArgs {
    pub fn config(&self) -> ConsensusConfig {
        ConsensusConfig {
            early_stop: !self.no_early_stop,
            early_stop_rule: match self.early_stop_rule {
                EarlyStopRuleArg::PeerMajority => EarlyStopRule::PeerMajority,
                EarlyStopRuleArg::ClassCountLiteral => EarlyStopRule::ClassCountLiteral,
            },
            round_cap_factor: self.round_cap_factor,
            tie_tolerance: self.tie_tolerance,
            rng_seed: self.seed,
            local_tie_policy: match self.local_tie_policy {
                TiePolicyArg::LowestIndex => LocalTiePolicy::LowestIndex,
                TiePolicyArg::SeededRandom => LocalTiePolicy::SeededRandom,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Leave timing out so output bytes depend only on the inputs
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub consensus: ConsensusArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated: posw, majority, bft, soft, local (all peers) or local_<i>
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "posw,majority,bft,soft,local"
    )]
    pub methods: Vec<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub consensus: ConsensusArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 5)]
    pub peers: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-peer accuracy targets; one value applies to every peer. Defaults
    /// to 0.87,0.87,0.86,0.88,0.84 repeated over the peers.
    #[arg(long, value_delimiter = ',')]
    pub accuracy: Vec<f64>,
    /// Sharpness of the generated beliefs; `inf` gives one-hot vectors
    #[arg(long, default_value_t = 3.0)]
    pub concentration: f64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Peer that never broadcasts (repeatable)
    #[arg(long)]
    pub silent: Vec<usize>,
    /// `peer:label:prob`, a peer that always broadcasts the given pair
    /// (repeatable). The label is a class name or index.
    #[arg(long)]
    pub liar: Vec<String>,
    /// Also write every per-round trace to this file
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub consensus: ConsensusArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Gen(args) => commands::gen(&args),
        Command::Simulate(args) => commands::simulate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::CapExceeded { trace, .. } = &e {
                eprintln!("{trace}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
