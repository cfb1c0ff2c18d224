//! `lcm-sim`: command-line harness for the life-cycle management simulator.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on
//! runtime failures.

mod common;
mod intervendor;
mod models;
mod registry;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::UsageError;

#[derive(Parser)]
#[command(name = "lcm-sim", version, about = "Closed-loop AI/ML model life-cycle management simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, events.log and summary.txt.
    Simulate(simulate::SimulateArgs),
    /// Train a model package.
    #[command(subcommand)]
    Train(models::TrainCommand),
    /// Evaluate a model package on a fresh trace.
    #[command(subcommand)]
    Eval(models::EvalCommand),
    /// Inspect and maintain a registry directory.
    Registry(registry::RegistryArgs),
    /// Two-sided model interoperability flows.
    #[command(subcommand)]
    Intervendor(intervendor::IntervendorCommand),
    /// Run a scenario once per value of one config key.
    Sweep(simulate::SweepArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::simulate(a),
        Command::Train(c) => models::train(c),
        Command::Eval(c) => models::eval(c),
        Command::Registry(a) => registry::run(a),
        Command::Intervendor(c) => intervendor::run(c),
        Command::Sweep(a) => simulate::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>() || matches!(c.downcast_ref::<lcm_core::Error>(), Some(lcm_core::Error::Config { .. }))
    })
}
