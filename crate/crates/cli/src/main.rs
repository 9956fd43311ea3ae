use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csc_cli::commands::{self, Options};
use csc_cli::config::{parse_window, FamilyConfig};
use csc_cli::error::CliError;

/// Degeneracy and bifurcation analysis for canonical variations of
/// Riemannian submersions.
#[derive(Debug, Parser)]
#[command(name = "cscbif", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Family configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Parameter window `a..b`, read as (a, b].
    #[arg(long, global = true)]
    window: Option<String>,

    /// Seed for randomized perturbations.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact degeneracy and bifurcation classification.
    Classify,
    /// Numerical branch detection, switching and continuation.
    Branch,
    /// Reduction and fiber-constancy checks at each branch point.
    Verify,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = FamilyConfig::from_toml_str(&text)?;
    let window = cli.window.as_deref().map(parse_window).transpose()?;
    let opts = Options {
        config,
        out: cli.out.clone(),
        window,
        seed: cli.seed,
    };
    let output = match cli.command {
        Command::Classify => commands::classify(&opts)?,
        Command::Branch => commands::branch(&opts)?,
        Command::Verify => commands::verify(&opts)?,
    };
    for f in &output.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
