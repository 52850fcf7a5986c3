use std::process::ExitCode;

use clap::Parser;
use parkour_cli::{execute, Cli, Exit};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Exit::InvalidInput.into()
            } else {
                Exit::Success.into()
            };
        }
    };
    execute(cli).into()
}
