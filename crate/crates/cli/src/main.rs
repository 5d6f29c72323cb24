use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zsgame_cli::config::{ConfigError, Format, RunConfig, DEFAULT_OUTPUT_DIR};
use zsgame_cli::report::{csv_table, write_outputs};
use zsgame_cli::sweep::{run_sweep, SweepConfig};
use zsgame_cli::{execute, prepare, ExitStatus, Mode};

#[derive(Parser)]
#[command(name = "zsgame", version, about = "Solve and audit two-agent zero-sum dynamic games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solvers and report their results.
    Solve(Args),
    /// Run the solvers and the audits requested under `verify`.
    Audit(Args),
    /// Run a batch of configurations and aggregate one CSV row per run.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated report formats, overriding the configuration.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    /// Reserved; every algorithm is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })
}

fn single(args: &Args, mode: Mode) -> Result<ExitStatus, ConfigError> {
    let mut config = RunConfig::from_json(&read(&args.config)?)?;
    if let Some(dir) = &args.out {
        config.output.directory = dir.clone();
    }
    if let Some(f) = &args.format {
        config.output.formats = f.clone();
    }
    let run = prepare(config)?;
    let outcome = execute(&run.config.problem.name, &run, mode);
    if let Some(e) = outcome.report.open_loop.iter().chain(outcome.report.feedback.iter()).find_map(|s| s.error.as_ref()) {
        eprintln!("solver error: {e}");
    }
    for c in outcome.report.checks.iter().filter(|c| !c.pass) {
        eprintln!("audit failed: {}{}", c.name, c.detail.as_ref().map(|d| format!(": {d}")).unwrap_or_default());
    }
    write_outputs(&run.config.output.directory, &run.config.output, &outcome)?;
    Ok(outcome.status)
}

fn sweep(args: &Args) -> Result<ExitStatus, ConfigError> {
    let sweep = SweepConfig::from_json(&read(&args.config)?)?;
    let configs = sweep.expand()?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let results = run_sweep(&configs, Mode::Audit);
    let mut worst = ExitStatus::Success;
    for (slot, outcome) in &results {
        worst = worst.max(outcome.status);
        if let Some(e) = &outcome.report.error {
            eprintln!("{}: {e}", outcome.report.run_id);
        }
        let mut output = slot.0.as_ref().map(|c| c.output.clone()).unwrap_or_default();
        if let Some(f) = &args.format {
            output.formats = f.clone();
        }
        write_outputs(&dir, &output, outcome)?;
    }
    fs::write(dir.join("sweep.csv"), csv_table(results.iter().map(|(_, o)| o))?)
        .map_err(|e| ConfigError::Output(format!("{}: {e}", dir.join("sweep.csv").display())))?;
    Ok(worst)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::ConfigError.code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => single(a, Mode::SolveOnly),
        Command::Audit(a) => single(a, Mode::Audit),
        Command::Sweep(a) => sweep(a),
    };
    let status = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitStatus::ConfigError
    });
    ExitCode::from(status.code() as u8)
}
