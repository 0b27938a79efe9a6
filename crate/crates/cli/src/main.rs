//! `wetting-lab`: batch front end. Exit codes: 0 success, 1 bad input,
//! 2 computational refusal, 3 flagged-inconsistent results.

mod args;
mod cache;
mod commands;
mod error;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use wetting_core::Execution;

use args::{Cli, RunConfig};
use commands::{dispatch, Ctx, Report};
use error::{CliError, CliResult};
use output::Sink;

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    if let Some(path) = &cli.replay {
        if cli.command.is_some() {
            return Err(CliError::Usage("--replay cannot be combined with a subcommand".into()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if let Some(w) = cli.workers {
            cfg.workers = w;
        }
        cfg.deterministic |= cli.deterministic;
        return Ok(cfg);
    }
    let command = cli
        .command
        .clone()
        .ok_or_else(|| CliError::Usage(format!("a subcommand is required\n\n{}", Cli::command().render_help())))?;
    Ok(RunConfig {
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers: cli.workers.unwrap_or_else(default_workers),
        deterministic: cli.deterministic,
        command,
    })
}

fn execute(cfg: &RunConfig, sink: &mut Sink) -> CliResult<Report> {
    if cfg.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let exec = if cfg.workers > 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let mut ctx = Ctx {
        sink,
        exec,
        deterministic: cfg.deterministic,
    };
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
        pool.install(|| dispatch(&cfg.command, &mut ctx))
    }
    #[cfg(not(feature = "parallel"))]
    dispatch(&cfg.command, &mut ctx)
}

fn run(cli: Cli) -> Result<Report, (Option<&'static str>, CliError)> {
    let cfg = resolve(&cli).map_err(|e| (None, e))?;
    let name = cfg.command.name();
    let mut sink = Sink::new(&cli.out).map_err(|e| (Some(name), e))?;
    sink.json("run.json", &cfg).map_err(|e| (Some(name), e))?;
    execute(&cfg, &mut sink).map_err(|e| (Some(name), e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(report.stdout.as_bytes());
            if report.flags.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &report.flags {
                    eprintln!("flagged: {f}");
                }
                ExitCode::from(3)
            }
        }
        Err((name, e)) => {
            match name {
                Some(n) => eprintln!("error: {n}: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
