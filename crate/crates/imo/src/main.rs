use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use imo::cli::{Cli, Command};
use imo::commands;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", usage());
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => commands::simulate(args).map(drop),
        Command::Run(args) => args.resolve().and_then(|cfg| commands::run(&cfg)).map(drop),
        Command::Eval(args) => commands::eval(args).map(drop),
        Command::InspectWeights(args) => commands::inspect_weights(args).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Usage line of the subcommand named on the command line, if any.
fn usage() -> String {
    let mut cmd = Cli::command();
    let name = std::env::args().nth(1).unwrap_or_default();
    match cmd.find_subcommand_mut(&name) {
        Some(sub) => sub.clone().bin_name(format!("imo {name}")).render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}
