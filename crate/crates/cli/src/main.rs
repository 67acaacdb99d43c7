//! `hisac` drives the compiler and the simulator from the shell. Three
//! subcommands: `compile` fixes a plan and the key material descriptors,
//! `run` executes a circuit against a plan, `analyze` prints the
//! per-layout planning table without committing to anything.

mod analyze;
mod compile;
mod io;
mod run;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hisac",
    version,
    about = "Compile, execute and cost out homomorphic tensor circuits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick encryption parameters and a data layout, write the plan
    /// plus the encryptor and decryptor descriptors.
    Compile(compile::Args),
    /// Execute a compiled circuit on the simulator and report what it
    /// cost.
    Run(run::Args),
    /// Compare every layout strategy side by side.
    Analyze(analyze::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(args) => compile::exec(args),
        Command::Run(args) => run::exec(args),
        Command::Analyze(args) => analyze::exec(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("hisac: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
