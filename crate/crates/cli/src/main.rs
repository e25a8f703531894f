mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::args::{resolve, Cli, Command};
use crate::error::CliError;
use crate::output::{emit_outputs, RunInfo};

/// Environment fallback for `--threads`.
const THREADS_ENV: &str = "PERC_LR_THREADS";

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if n == 0 {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    Ok(n)
}

fn run(cli: Cli) -> Result<String, CliError> {
    let started = Instant::now();
    let name = cli.command.name();
    let flags = resolve(cli.command.flags())?;
    let threads = thread_count(flags.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    let outcome = pool.install(|| match &cli.command {
        Command::Sample(_) => commands::sample(&flags),
        Command::TwoPoint(_) => commands::two_point(&flags),
        Command::Sweep(_) => commands::sweep(&flags),
        Command::FindCritical(_) => commands::find_critical(&flags),
        Command::Triangle(_) => commands::triangle(&flags),
        Command::Report(_) => commands::report(&flags),
        Command::VerifyAnalytic(_) => commands::verify_analytic(&flags),
    })?;
    let info = RunInfo {
        command: name,
        kernel: outcome.kernel.as_ref(),
        params: outcome.params,
        seed: outcome.seed,
        threads,
        started,
    };
    emit_outputs(&outcome.artifacts, &commands::out_dir(&flags, name), &info)?;
    Ok(outcome.summary)
}

fn main() -> ExitCode {
    // clap exits with status 2 on malformed flags.
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lrperc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
