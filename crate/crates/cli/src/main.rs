use clap::Parser;

fn main() {
    let cli = crisis_cli::Cli::parse();
    crisis_cli::cli::init_logging(cli.common.verbose);
    if let Err(err) = crisis_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(crisis_cli::exit_code(&err));
    }
}
