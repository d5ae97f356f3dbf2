use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etopt_core::config::Mode;

mod run;

use run::Overrides;
#[cfg(test)]
use run::CliError;

/// Expected-time trajectory optimization under initial-state uncertainty.
///
/// Log verbosity is controlled by `RUST_LOG` (e.g. `RUST_LOG=info`).
#[derive(Parser, Debug)]
#[command(name = "etopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the particle problem once and write the plan.
    Solve(RunArgs),
    /// Open-loop Monte Carlo comparison against the deterministic baseline.
    McOpenLoop(RunArgs),
    /// Receding-horizon simulation of both policies.
    ClosedLoop(RunArgs),
    /// Open-loop Monte Carlo for each weight family.
    SweepWeights(RunArgs),
    /// Open-loop Monte Carlo for each consensus horizon.
    SweepConsensus(RunArgs),
    /// Run whichever mode the config names.
    Run(RunArgs),
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON). A run manifest is accepted as well.
    #[arg(long)]
    config: PathBuf,
    /// Replaces `uncertainty.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap for Monte Carlo evaluation.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; defaults to `experiment.output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            jobs: self.jobs,
            out: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => run::validate(config),
        Command::Solve(a) => run::execute(&a.config, Some(Mode::Solve), &a.overrides()),
        Command::McOpenLoop(a) => run::execute(&a.config, Some(Mode::McOpenLoop), &a.overrides()),
        Command::ClosedLoop(a) => run::execute(&a.config, Some(Mode::ClosedLoop), &a.overrides()),
        Command::SweepWeights(a) => run::execute(&a.config, Some(Mode::SweepWeights), &a.overrides()),
        Command::SweepConsensus(a) => run::execute(&a.config, Some(Mode::SweepConsensus), &a.overrides()),
        Command::Run(a) => run::execute(&a.config, None, &a.overrides()),
    };
    match result {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code())
        }
    }
}
