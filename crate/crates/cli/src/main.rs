use clap::Parser;

fn main() {
    let cli = sprlab_cli::Cli::parse();
    std::process::exit(sprlab_cli::run(&cli));
}
