use clap::Parser;

fn main() {
    let cli = pgan_cli::Cli::parse();
    if let Err(err) = pgan_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(pgan_cli::exit_code(&err));
    }
}
