use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coarea_cli::{cmd_gpc, cmd_grid, cmd_reconstruct, cmd_validate, write_outputs, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "coarea", version, about = "Coarea grids and null-field reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; built-in ellipse sweep when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `oracle.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `section.key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coarea and naive grids as CSV.
    Grid,
    /// Kernel errors over the (kappa, L) sweep.
    Reconstruct,
    /// Expansion table at one (kappa, L).
    Gpc,
    /// Monte Carlo comparison of the expectations.
    Validate,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::default().emit(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("oracle.seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={:?}", out.display().to_string()));
    }
    ExperimentConfig::parse_with_overrides(&text, &overrides)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    let outputs = match cli.command {
        Command::Grid => cmd_grid(&cfg)?,
        Command::Reconstruct => cmd_reconstruct(&cfg)?,
        Command::Gpc => cmd_gpc(&cfg)?,
        Command::Validate => cmd_validate(&cfg)?,
    };
    write_outputs(&cfg.output.dir, &outputs)?;
    for o in &outputs {
        println!("{}", cfg.output.dir.join(&o.name).display());
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn run_with_threads(cli: &Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| run(cli))
        }
        None => run(cli),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_threads(cli: &Cli) -> Result<(), CliError> {
    run(cli)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_with_threads(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
