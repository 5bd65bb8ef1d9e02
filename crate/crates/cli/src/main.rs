//! `noma-harq` command-line front end.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Output;
use crate::config::{CommandName, Overrides, RunConfig, UsageError};

#[derive(Debug, Parser)]
#[command(name = "noma-harq", version, about = "Analysis, optimization and simulation of uplink NOMA with one HARQ retransmission")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-user PER, first-attempt success probability and throughput from the Markov chain.
    Analyze {
        /// Also write the 3^N x 3^N transition matrix as CSV.
        #[arg(long)]
        emit_matrix: Option<PathBuf>,
        /// Also write the stationary distribution as CSV.
        #[arg(long)]
        emit_states: Option<PathBuf>,
    },
    /// PER and throughput against SNR.
    ///
    /// Coordinated sweeps use the analysis, uncoordinated ones the simulator.
    /// `--oma` adds the OMA-HARQ baseline, whose per-slot received power is
    /// P_oma = P0 * T_noma / T_oma(P_oma), with T = 2 - p_s the mean number of
    /// transmissions per packet (T_noma averaged over the NOMA users).
    Sweep,
    /// Minimum worst-user PER over the ratios at every P0 of the grid.
    OptimizePareto,
    /// Shortest codeword meeting --target-per for every user at one SNR.
    MinBlocklength,
    /// Slot-level Monte Carlo simulation.
    ///
    /// `--scenario oma` simulates round-robin OMA-HARQ at the fair power
    /// P_oma = P0 * T_noma / T_oma(P_oma) described under `sweep`.
    Simulate,
    /// Cell plan for N̂ users: ring radii and the ratio of every segment.
    Cellplan,
}

impl Command {
    fn name(&self) -> CommandName {
        match self {
            Command::Analyze { .. } => CommandName::Analyze,
            Command::Sweep => CommandName::Sweep,
            Command::OptimizePareto => CommandName::OptimizePareto,
            Command::MinBlocklength => CommandName::MinBlocklength,
            Command::Simulate => CommandName::Simulate,
            Command::Cellplan => CommandName::Cellplan,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Ok(threads) = std::env::var("NOMA_HARQ_THREADS") {
        let threads: usize =
            threads.parse().map_err(|_| UsageError(format!("NOMA_HARQ_THREADS must be a positive integer, got `{threads}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let mut cfg = match &cli.overrides.config {
        Some(path) => config::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.overrides);
    cfg.command = cli.command.name();
    let plan_users = match cfg.scenario {
        config::ScenarioArg::Uncoordinated => cfg.n_hat.get_or_insert(cfg.users).to_owned(),
        _ if cfg.command == CommandName::Cellplan => cfg.n_hat.unwrap_or(cfg.users),
        _ => cfg.users,
    };
    if !matches!(cfg.command, CommandName::OptimizePareto | CommandName::MinBlocklength) {
        cfg.resolve_alphas(plan_users)?;
    }
    let out = Output { format: cli.overrides.format.unwrap_or_default(), path: cli.overrides.out.clone(), verbose: cli.verbose };
    match &cli.command {
        Command::Analyze { emit_matrix, emit_states } => {
            commands::analyze(&cfg, &out, emit_matrix.as_deref(), emit_states.as_deref())
        }
        Command::Sweep => commands::sweep(&cfg, &out),
        Command::OptimizePareto => commands::optimize_pareto(&cfg, &out),
        Command::MinBlocklength => commands::min_blocklength(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Cellplan => commands::cellplan(&cfg, &out),
    }
}

/// 2 for bad input, 3 for numerical failures and infeasible targets, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<noma_harq::Error>() {
            use noma_harq::Error::*;
            return match e {
                Domain(_) | InvalidConfig(_) | TooManyUsers { .. } | OutOfCell { .. } => 2,
                RowSum { .. } | Stationary { .. } | Infeasible { .. } => 3,
            };
        }
    }
    1
}

fn broken_pipe(err: &anyhow::Error) -> bool {
    use std::io::ErrorKind::BrokenPipe;
    err.chain().any(|c| {
        if let Some(e) = c.downcast_ref::<std::io::Error>() {
            e.kind() == BrokenPipe
        } else if let Some(e) = c.downcast_ref::<serde_json::Error>() {
            e.io_error_kind() == Some(BrokenPipe)
        } else if let Some(e) = c.downcast_ref::<csv::Error>() {
            matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == BrokenPipe)
        } else {
            false
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed downstream pipe (`| head`) is not an error
        Err(err) if broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
