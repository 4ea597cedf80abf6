use clap::Parser;

fn main() {
    let cli = circle_lab::cli::Cli::parse();
    std::process::exit(circle_lab::cli::run(cli));
}
