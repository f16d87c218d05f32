use clap::Parser;

fn main() {
    let cli = indcal_cli::Cli::parse();
    if let Err(err) = indcal_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(indcal_cli::exit_code(&err));
    }
}
