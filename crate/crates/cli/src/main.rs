use clap::Parser;
use presic_cli::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(presic_cli::run(&cli));
}
