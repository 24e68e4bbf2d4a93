//! `mec-aoi`: evaluate offloading policies, solve for the optimum and sweep
//! the age vs. edge-cloud frequency frontier.
//!
//! Exit codes: 0 success, 1 failed check, 2 invalid flags, 3 I/O error.

mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalArgs, FrontierArgs, RviArgs, SimulateArgs, VerifyArgs};

#[derive(Parser, Debug)]
#[command(name = "mec-aoi", version, about = "Age of information with edge-cloud offloading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one policy and print it as a frontier point
    Eval(EvalArgs),
    /// Sweep every policy family and write the frontier
    Frontier(FrontierArgs),
    /// Structural checks on the optimal policy plus closed-form/chain/simulation agreement
    Verify(VerifyArgs),
    /// Monte Carlo estimate for one policy
    Simulate(SimulateArgs),
    /// Solve for the average-cost optimal policy
    Rvi(RviArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Frontier(a) => commands::frontier_cmd(a),
        Command::Verify(a) => commands::verify(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Rvi(a) => commands::rvi(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
