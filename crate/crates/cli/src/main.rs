use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use flmarket_cli::run::{
    cmd_compare, cmd_generate, cmd_solve, cmd_verify, CompareArgs, GenerateArgs, SolveArgs,
    VerifyArgs,
};

/// Market simulator for federated-learning services: client selection,
/// per-client equilibrium pricing, and baseline comparisons.
#[derive(Parser)]
#[command(name = "flmarket", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic client population.
    Generate(GenerateArgs),
    /// Run one selection/pricing algorithm on a population.
    Solve(SolveArgs),
    /// Run every algorithm over a seed grid and emit comparison tables.
    Compare(CompareArgs),
    /// Re-audit a stored report against its population.
    Verify(VerifyArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(64);
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Verify(args) => cmd_verify(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
