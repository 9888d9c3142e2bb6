use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use mvsde_cli::config::{parse_config, Overrides};
use mvsde_cli::run::{run, Subcommand};

#[derive(Parser)]
#[command(name = "mvsde", version, about = "Interacting-particle experiments for degenerate McKean-Vlasov systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Integrate the particle system and store the trajectory.
    Simulate(Common),
    /// Check the coefficient hypotheses on random samples.
    Validate(Common),
    /// Compare terminal laws across refinement levels.
    Ladder(Common),
    /// Simulate, then estimate moments and check the degenerate block.
    Diagnose(Common),
    /// Test future Wiener increments for independence from the past.
    Independence(Common),
}

#[derive(Args)]
struct Common {
    /// Sectioned key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    retain_increments: bool,
    /// Override any configuration key, e.g. `--set ladder.levels=[2,4,8]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Command::Simulate(c) => (Subcommand::Simulate, c),
        Command::Validate(c) => (Subcommand::Validate, c),
        Command::Ladder(c) => (Subcommand::Ladder, c),
        Command::Diagnose(c) => (Subcommand::Diagnose, c),
        Command::Independence(c) => (Subcommand::Independence, c),
    };
    match execute(cmd, common) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Subcommand, c: Common) -> Result<String, mvsde_cli::run::Error> {
    if let Some(w) = c.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global()?;
    }
    let overrides = Overrides {
        seed: c.seed,
        retain_increments: c.retain_increments,
        set: c.set,
    };
    let config = parse_config(c.config.as_deref(), &overrides)?;
    run(cmd, config, &c.out)
}
