use clap::Parser;
use shgt_cli::{init_logging, run, Cli};

fn main() {
    // clap exits with 2 on bad usage and 0 for --help / --version
    let cli = Cli::parse();
    if let Err(err) = init_logging().and_then(|()| run(&cli)) {
        eprintln!("shgt: {err}");
        std::process::exit(err.exit_code());
    }
}
