use clap::Parser;
use psps_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code);
    }
}
