//! Config-driven runner for the contact-hj solvers.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver error, 3 a
//! residual exceeded its tolerance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contact_hj::{io::save_json, Check};
use serde::Serialize;

use crate::commands::{Context, Outcome};
use crate::config::{RunConfig, DEFAULT_SEED};
use crate::error::CliError;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "contact-hj", version, about = "Implicit action functions, solution semigroups and the ergodic problem for contact Hamilton-Jacobi equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for randomized property sampling; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Forward and backward implicit action fields from an anchor.
    Action,
    /// Backward and forward solution semigroups applied to initial data.
    Evolve,
    /// Critical value and a weak KAM solution of the ergodic problem.
    Ergodic,
    /// The property suite for the configured family.
    Verify,
    /// Finite-difference evolution cross-validated against the semigroup.
    Oracle,
    /// Timings of the main solvers.
    Bench,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Action => "action",
            Command::Evolve => "evolve",
            Command::Ergodic => "ergodic",
            Command::Verify => "verify",
            Command::Oracle => "oracle",
            Command::Bench => "bench",
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    subcommand: &'a str,
    seed: u64,
    config: &'a RunConfig,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    summary: serde_json::Value,
    residuals: &'a [Check],
    outputs: &'a [String],
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CONTACT_HJ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CONTACT_HJ_THREADS: expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("CONTACT_HJ_THREADS: {e}")))
}

fn print_table(command: &str, outcome: &Outcome) {
    println!("{command}: {}", outcome.summary);
    if outcome.residuals.is_empty() {
        return;
    }
    let width = outcome.residuals.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &outcome.residuals {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("  {mark}  {:<width$}  {:>12.4e}  {:?} {:.4e}", c.name, c.measured, c.relation, c.tolerance);
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let base = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Config(format!("--out {}: {e}", cli.out.display())))?;
    let ctx = Context { cfg: &cfg, out: &cli.out, base, seed };
    let result = match cli.command {
        Command::Action => commands::action(&ctx),
        Command::Evolve => commands::evolve(&ctx),
        Command::Ergodic => commands::ergodic(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Oracle => commands::oracle(&ctx),
        Command::Bench => commands::bench(&ctx),
    };
    let name = cli.command.name();
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        subcommand: name,
        seed,
        config: &cfg,
        passed: false,
        error: None,
        summary: serde_json::Value::Null,
        residuals: &[],
        outputs: &[],
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e.to_string());
            save_json(&cli.out.join("report.json"), &report)?;
            return Err(e);
        }
    };
    let failed = outcome.residuals.iter().filter(|c| !c.passed).count();
    report.passed = failed == 0;
    report.summary = outcome.summary.clone();
    report.residuals = &outcome.residuals;
    report.outputs = &outcome.outputs;
    save_json(&cli.out.join("report.json"), &report)?;
    if !cli.quiet {
        print_table(name, &outcome);
    }
    if failed > 0 {
        return Err(CliError::Property(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
