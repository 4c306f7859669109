use clap::Parser;

fn main() {
    let cli = dpam_cli::Cli::parse();
    if let Err(err) = dpam_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
