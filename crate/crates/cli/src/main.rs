use std::process::ExitCode;

use bspinn_cli::{run, Cli, Command};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Price(args) = &cli.command {
        if args.sigma.is_none() && args.tenor != 0.0 {
            Cli::command()
                .error(
                    ErrorKind::MissingRequiredArgument,
                    "--sigma is required when --tenor is not 0",
                )
                .exit();
        }
    }
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
