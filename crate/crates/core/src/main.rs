use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nehari_lab::config::{parse_config, ExperimentConfig, Task};
use nehari_lab::run::run_experiment;

#[derive(Parser)]
#[command(name = "nehari-lab", version, about = "Ground states of competitive elliptic systems on the discrete Nehari manifold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap for parallel sweep entries.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy over the Nehari set and certify the result.
    Solve(Common),
    /// Minimize the mass-constrained energy on the unit-mass manifold.
    SolveMass(Common),
    /// Verify the structural assumptions of the model on the given grid.
    Check(Common),
    /// Polarization inequality audit over the half-space family.
    Polarize(Common),
    /// β-sweep with radial-deviation and symmetry metrics per entry.
    Sweep(Common),
}

fn expected_task(cmd: &Command) -> Task {
    match cmd {
        Command::Solve(_) => Task::Solve,
        Command::SolveMass(_) => Task::SolveMass,
        Command::Check(_) => Task::CheckAssumptions,
        Command::Polarize(_) => Task::PolarizeAudit,
        Command::Sweep(_) => Task::SweepBeta,
    }
}

fn load_config(common: &Common, task: Task) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let mut config = parse_config(&text).map_err(|e| e.to_string())?;
    if config.task != task {
        return Err(format!(
            "config declares task `{}` but the `{}` subcommand was invoked",
            config.task.as_str(),
            task.as_str()
        ));
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let task = expected_task(&cli.command);
    let common = match &cli.command {
        Command::Solve(c)
        | Command::SolveMass(c)
        | Command::Check(c)
        | Command::Polarize(c)
        | Command::Sweep(c) => c,
    };

    let config = match load_config(common, task) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    match run_experiment(&config, &common.out, common.workers) {
        Ok(summary) => {
            println!(
                "task {} done in {:.2}s, outputs in {}",
                summary.task.as_str(),
                summary.wall_clock_seconds,
                common.out.display()
            );
            if summary.flags_ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: one or more acceptance flags failed; see summary.json");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
