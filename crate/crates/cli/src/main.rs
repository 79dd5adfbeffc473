use clap::Parser;
use robustify_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = robustify_cli::configure_threads().and_then(|()| robustify_cli::run(&cli)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
