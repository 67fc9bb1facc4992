//! Command-line front end for the federated LDP simulator.
//!
//! Five subcommands: `run` trains one configured experiment and leaves a
//! reproducible run directory; `sweep` repeats it across privacy budgets;
//! `verify` runs the statistical battery (with `--mutate` proving it has
//! teeth); `shuffle-demo` prints one watchable split-and-shuffle round;
//! `report` summarizes a finished run directory.
//!
//! Exit codes: 0 success, 1 verification or run failure, 2 usage or
//! config error (including argument parsing), 3 I/O error.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod artifacts;
mod config;
mod console;
mod demo;
mod error;
mod report;
mod run;
mod sweep;
mod verify;

#[derive(Parser)]
#[command(
    name = "fedldp",
    version,
    about = "Simulate locally differentially private federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the statistical verification battery
    Verify(verify::VerifyArgs),
    /// Train one federated run from a config file
    Run(run::RunArgs),
    /// Repeat a run across a list of privacy budgets
    Sweep(sweep::SweepArgs),
    /// Print one split-and-shuffle round as the collector sees it
    ShuffleDemo(demo::DemoArgs),
    /// Summarize a finished run directory
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => verify::cmd_verify(args),
        Command::Run(args) => run::cmd_run(args),
        Command::Sweep(args) => sweep::cmd_sweep(args),
        Command::ShuffleDemo(args) => demo::cmd_demo(args),
        Command::Report(args) => report::cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
