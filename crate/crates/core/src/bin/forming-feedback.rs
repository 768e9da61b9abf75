use clap::Parser;
use forming_feedback::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
