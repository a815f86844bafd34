//! `geodyn`: trajectory runs, convergence sweeps, Helmholtz checks and
//! modified-equation demos for the split variational integrators.
//!
//! Exit status: 0 on success, 1 when a check fails or a computation breaks
//! down, 2 on usage, configuration or parse errors.

mod args;
mod check;
mod config;
mod convergence;
mod error;
mod modified;
mod output;
mod run;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

const WORKERS_VAR: &str = "GEODYN_WORKERS";

fn init_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_VAR}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size worker pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => run::cmd_run(&a),
        Command::Convergence(a) => convergence::cmd_convergence(&a),
        Command::Check(a) => check::cmd_check(&a),
        Command::Modified(a) => modified::cmd_modified(&a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => return e.report(),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match init_workers().and_then(|()| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
