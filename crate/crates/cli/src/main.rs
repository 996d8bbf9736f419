use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use polis_core::pipeline::{self, BackendKind, Command, Overrides, PipelineError, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Cmd {
    /// Write a planted-marker synthetic corpus into <out>/synthetic.
    Synth,
    Ingest,
    Infer,
    Aggregate,
    Eval,
    Proximity,
    Lexical,
    Baseline,
    Sensitivity,
    Report,
    /// ingest through report, skipping disabled analyses.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

/// Political-alignment inference pipeline.
///
/// Exit codes: 0 success, 2 invalid configuration, 3 missing upstream
/// artifact, 4 backend unreachable after retries, 5 too many malformed
/// responses.
#[derive(Debug, Parser)]
#[command(name = "polis-probe", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Maximum requests in flight.
    #[arg(long)]
    concurrency: Option<usize>,
}

fn to_command(c: Cmd) -> Option<Command> {
    Some(match c {
        Cmd::Synth => Command::Synth,
        Cmd::Ingest => Command::Ingest,
        Cmd::Infer => Command::Infer,
        Cmd::Aggregate => Command::Aggregate,
        Cmd::Eval => Command::Eval,
        Cmd::Proximity => Command::Proximity,
        Cmd::Lexical => Command::Lexical,
        Cmd::Baseline => Command::Baseline,
        Cmd::Sensitivity => Command::Sensitivity,
        Cmd::Report => Command::Report,
        Cmd::All => return None,
    })
}

fn execute(cli: &Cli) -> Result<i32, PipelineError> {
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        backend: cli.backend.map(|b| match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        }),
        concurrency: cli.concurrency,
    };
    let run = Run::from_file(&cli.config, &overrides)?;
    if run.offline {
        log::info!("NO_NETWORK set: inference is mock or cache-only");
    }
    let outcomes = match to_command(cli.command) {
        Some(c) => vec![pipeline::run(c, &run)?],
        None => pipeline::run_all(&run)?,
    };
    for o in &outcomes {
        log::info!("{}: exit {} ({})", o.command, o.exit_code, o.manifest_path.display());
    }
    Ok(pipeline::combined_exit(&outcomes))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
