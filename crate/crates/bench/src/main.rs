use clap::Parser;

fn main() {
    let cli = sdmbench::cli::Cli::parse();
    if let Err(e) = sdmbench::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
