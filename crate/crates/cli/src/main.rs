mod args;
mod commands;
mod grid;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    let outcome = match cli.command {
        args::Command::Run(a) => commands::run(&a),
        args::Command::Report(a) => commands::report(&a),
        args::Command::Sweep(a) => commands::sweep(&a),
        args::Command::Synth(a) => commands::synth(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
