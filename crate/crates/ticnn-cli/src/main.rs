//! Single executable wrapping the library: distort / train / eval /
//! grad-check / invariance / retrieve.
//!
//! Exit codes are stable per error class: 1 usage, 2 format (unreadable or
//! malformed files), 3 numeric/contract errors, 4 divergence. All output
//! files are written atomically, and every random choice flows from an
//! explicit seed, so re-running a command with the same inputs reproduces
//! its artifacts byte for byte.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use ticnn::Error;

#[derive(Parser)]
#[command(
    name = "ticnn",
    about = "Train and analyze CNNs with random feature-map transforms",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a distortion protocol (R/S/T/RTS) to MNIST-style IDX files.
    Distort(commands::DistortArgs),
    /// Train a network described by a TOML config on an IDX dataset.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint on an IDX dataset.
    Eval(commands::EvalArgs),
    /// Verify backprop gradients against central finite differences.
    GradCheck(commands::GradCheckArgs),
    /// Measure per-neuron invariance scores over a transform sweep.
    Invariance(commands::InvarianceArgs),
    /// Score retrieval quality of descriptors on a grouped corpus.
    Retrieve(commands::RetrieveArgs),
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Format(_) | Error::Io(_) => 2,
        Error::Divergence(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Distort(args) => commands::distort(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::GradCheck(args) => commands::grad_check(args),
        Command::Invariance(args) => commands::invariance(args),
        Command::Retrieve(args) => commands::retrieve(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
