use clap::Parser;
use smcvar_cli::commands::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = execute(cli) {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}
