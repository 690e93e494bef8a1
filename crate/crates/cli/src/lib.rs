//! Command dispatch for the `fhoi` tool.

pub mod args;
pub mod commands;
pub mod failure;
pub mod layered;
pub mod manifest;
pub mod outputs;

use args::{Cli, Command};
use clap::Parser;
use failure::{CliResult, EXIT_OK};

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => commands::gen_data::run(a),
        Command::BuildInstructions(a) => commands::build_instructions::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Infer(a) => commands::infer::run(a),
        Command::Rollout(a) => commands::rollout::run(a),
    }
}

/// Parses `argv`, runs the command and returns the exit status.
pub fn main_with<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return e.exit_code() as u8;
        }
        Err(e) => {
            let _ = e.print();
            return EXIT_OK;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.line());
            f.code
        }
    }
}
