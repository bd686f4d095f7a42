mod args;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use run::Failure;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => run::generate(&a),
        Command::Solve(a) => run::solve(&a),
        Command::Verify(a) => run::verify(&a),
        Command::Bench(a) => run::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
