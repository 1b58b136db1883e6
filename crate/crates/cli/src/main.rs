//! `restake-lab`: slashing, best-response and random-network analysis from
//! the command line.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::Format;

pub const EXIT_FIXTURE: u8 = 1;
pub const EXIT_PRECONDITION: u8 = 2;
pub const EXIT_STATISTICAL: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "restake-lab", version, about = "Restaking slashing and Sybil analysis")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Override the pass tolerance of reference checks.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Seed for randomised commands.
    #[arg(long, global = true, env = "RESTAKE_LAB_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct AttackInput {
    /// Graph file (JSON).
    pub graph: PathBuf,
    /// Attack file (JSON).
    pub attack: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mechanism {
    Marginal,
    Max,
    Additive,
    Minimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SharingArg {
    Proportional,
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Max,
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Distinct,
    Replacement,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Feasibility, profitability and stability of an attack.
    Check(AttackInput),
    /// Per-operator slash of an attack.
    Slash {
        #[command(flatten)]
        input: AttackInput,
        #[arg(long, value_enum, default_value_t = Mechanism::Marginal)]
        mechanism: Mechanism,
    },
    /// Best commitment of one attacker given the others.
    BestResponse {
        #[command(flatten)]
        input: AttackInput,
        /// Operator whose commitment is optimised.
        operator: String,
        #[arg(long, value_enum, default_value_t = SharingArg::Proportional)]
        sharing: SharingArg,
        #[arg(long, value_enum, default_value_t = SchemeArg::Max)]
        scheme: SchemeArg,
        /// Print the utility on this many grid points instead.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Every feasible, profitable full-stake attack.
    Enumerate {
        /// Graph file (JSON).
        graph: PathBuf,
        #[arg(long, default_value_t = usize::MAX, hide_default_value = true)]
        max_services: usize,
        #[arg(long, default_value_t = usize::MAX, hide_default_value = true)]
        max_attackers: usize,
    },
    /// Analytic attack success on a block-model network.
    Sbm {
        /// Block-model config file (JSON).
        config: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        stake: f64,
        #[arg(long, default_value_t = 2)]
        sybils: u32,
        /// Iterate over a grid of stakes and identity counts.
        #[arg(long)]
        sweep: bool,
        /// Largest stake of the sweep (defaults to twice the stake).
        #[arg(long)]
        x_to: Option<f64>,
        #[arg(long, default_value_t = 20)]
        x_steps: usize,
        #[arg(long, default_value_t = 10)]
        k_max: u32,
    },
    /// Simulated attack success compared with the analytic values.
    Montecarlo {
        /// Block-model config file (JSON).
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        replications: u64,
        #[arg(long, default_value_t = 3.0)]
        stake: f64,
        #[arg(long, default_value_t = 2)]
        sybils: u32,
        #[arg(long, value_enum, default_value_t = PolicyArg::Distinct)]
        policy: PolicyArg,
        /// Drop replications whose attacker has too few neighbours.
        #[arg(long)]
        exclude_short: bool,
        /// Relative jitter of background stakes.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Largest |z| accepted.
        #[arg(long, default_value_t = 4.0)]
        z_max: f64,
    },
    /// Recompute the reference examples and compare with the published values.
    PaperExamples {
        /// Restrict to one group or one quantity.
        #[arg(long)]
        only: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.output);
            ExitCode::from(outcome.code)
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
