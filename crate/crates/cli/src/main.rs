use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use weakpovm_cli::commands::{
    cmd_decompose, cmd_oracle, cmd_simulate, cmd_validate, write_outputs, OracleArgs, PovmArgs,
    SimulateArgs,
};
use weakpovm_cli::Status;

/// Realizes qubit POVMs as sequences of destructive weak measurements.
///
/// Exit codes: 0 success, 1 invalid input or configuration, 2 outcome
/// frequencies outside the z limit, 3 numerical invariant failure.
///
/// Set WEAKPOVM_THREADS to fix the worker thread count. Results do not depend
/// on it.
#[derive(Debug, Parser)]
#[command(name = "weakpovm", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a POVM file and print its elements
    Validate(PovmArgs),
    /// Split a POVM into linearly independent leaves and projective plans
    Decompose(PovmArgs),
    /// Sample trajectories and compare label frequencies with the Born rule
    Simulate(SimulateArgs),
    /// Enumerate every outcome string up to a depth with exact probabilities
    Oracle(OracleArgs),
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("WEAKPOVM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| format!("WEAKPOVM_THREADS={value:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(Status::ValidationFailed.code() as u8);
    }
    let start = Instant::now();
    let (result, out_dir) = match &cli.command {
        Command::Validate(a) => (cmd_validate(a), a.out.clone()),
        Command::Decompose(a) => (cmd_decompose(a), a.out.clone()),
        Command::Simulate(a) => (cmd_simulate(a), a.target.out.clone()),
        Command::Oracle(a) => (cmd_oracle(a), a.target.out.clone()),
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.status().code() as u8);
        }
    };
    print!("{}", output.summary);
    if let Some(dir) = out_dir {
        if let Err(e) = write_outputs(&dir, &output) {
            eprintln!("error: {e}");
            return ExitCode::from(e.status().code() as u8);
        }
        println!("wrote {}", dir.join("bundle.json").display());
    }
    eprintln!("elapsed {:.2?}", start.elapsed());
    ExitCode::from(output.status().code() as u8)
}
