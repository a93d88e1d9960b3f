use clap::Parser;

fn main() {
    let cli = scloc_cli::Cli::parse();
    if let Err(e) = scloc_cli::run(cli) {
        eprintln!("scloc: {e}");
        std::process::exit(e.exit_code());
    }
}
