//! Experiment runner for masked-encoding tabular pretraining.
//!
//! Subcommands mirror the experiment lifecycle: `pretrain` fits an encoder
//! on unlabeled rows, `finetune-eval` scores frozen representations with an
//! MLP head, `toy-study` emits plot-ready CSVs for the two-circles dataset,
//! and `sweep` grids one axis over seeds.
//!
//! Every run directory holds the exact resolved configuration used plus a
//! manifest (config hash, seed, version); re-running a stored resolved
//! config with the same seed regenerates byte-identical metrics files.
//! Wall-clock timings go to a separate `timings.csv` so the deterministic
//! files stay reproducible.

pub mod commands;
pub mod config;
pub mod runs;

use clap::Parser;

/// Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.
pub fn classify_error(e: &met_core::Error) -> i32 {
    use met_core::Error::*;
    match e {
        NonFinite { .. } => 3,
        Data(_) | Csv(_) | Io(_) => 2,
        ShapeMismatch { .. } | InvalidConfig(_) | InvalidInput(_) | Json(_) => 1,
    }
}

#[derive(Debug, Parser)]
#[command(name = "met", version, about = "Masked-encoding tabular pretraining experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: commands::Command,
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    met_core::runtime::init_thread_pool_from_env();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default exit code collides with the data-error code;
            // usage problems are config errors here. Help/version requests
            // stay successful.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            classify_error(&e)
        }
    }
}
