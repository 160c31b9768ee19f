//! Command-line driver: synthetic cohorts, training runs with manifests,
//! checkpoint evaluation, gradient checks and curve plots.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod summary;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

pub const LOG_ENV: &str = "SHGT_LOG_LEVEL";

/// Configures logging from `SHGT_LOG_LEVEL` (`error`, `warn`, `info` or
/// `debug`; `warn` when unset).
pub fn init_logging() -> CliResult<()> {
    let level = match std::env::var(LOG_ENV) {
        Ok(v) => match v.trim().to_ascii_lowercase().as_str() {
            "error" => log::LevelFilter::Error,
            "warn" => log::LevelFilter::Warn,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            _ => {
                return Err(CliError::Usage(format!(
                    "{LOG_ENV}={v:?}; expected error, warn, info or debug"
                )))
            }
        },
        Err(_) => log::LevelFilter::Warn,
    };
    // a second call (as in tests) keeps the first logger
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => commands::generate::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
        Command::Plot(a) => commands::plot::run(a),
    }
}
