//! Command-line front end for `robustify`: simulation studies, regression
//! fit/predict/evaluate, topic models, and figure reproduction.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;
pub mod lda;
pub mod reproduce;

use args::{Cli, Command, LdaCommand};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Lda(LdaCommand::Gen(a)) => lda::gen(a),
        Command::Lda(LdaCommand::Fit(a)) => lda::fit(a),
        Command::Lda(LdaCommand::Eval(a)) => lda::eval(a),
        Command::Reproduce(a) => reproduce::reproduce(a).map(|_| ()),
    }
}

/// Sizes the global worker pool from `ROBUSTIFY_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("ROBUSTIFY_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        error::CliError::Config(format!(
            "ROBUSTIFY_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| error::CliError::Other(e.to_string()))
}
