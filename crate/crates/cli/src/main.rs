use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfbsde::acceptance::acceptance_suite;
use mfbsde::config::{load_config, ExperimentConfig, ExperimentKind};
use mfbsde::error::{CliError, EXIT_CRITERION, EXIT_PASS, EXIT_USAGE};
use mfbsde::experiments::run_experiment;
use mfbsde::report::Report;

/// Mean-field quadratic BSDE experiments.
#[derive(Debug, Parser)]
#[command(name = "mfbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plain LSMC solve with laws frozen at the Dirac mass.
    Solve(Common),
    /// Picard iteration over the laws.
    Picard(Common),
    /// Particle convergence study.
    Particles(Common),
    /// Randomized comparison-principle cases.
    Compare(Common),
    /// Nonlocal PDE solve.
    Pde(Common),
    /// PDE against BSDE at the initial point.
    FkCheck(Common),
    /// A-priori constants of a growth profile.
    Bounds(Common),
    /// Moments of the Brownian increments.
    BrownianCheck(Common),
    /// Log-log rate fit of a list of errors.
    RateFit(Common),
    /// Forward reference SDE moments.
    Forward(Common),
    /// Run every acceptance criterion.
    Acceptance {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated particle counts.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
}

impl Command {
    fn experiment(&self) -> Option<(ExperimentKind, &Common)> {
        let kind = match self {
            Command::Solve(c) => (ExperimentKind::Solve, c),
            Command::Picard(c) => (ExperimentKind::Picard, c),
            Command::Particles(c) => (ExperimentKind::Particles, c),
            Command::Compare(c) => (ExperimentKind::Compare, c),
            Command::Pde(c) => (ExperimentKind::Pde, c),
            Command::FkCheck(c) => (ExperimentKind::FkCheck, c),
            Command::Bounds(c) => (ExperimentKind::Bounds, c),
            Command::BrownianCheck(c) => (ExperimentKind::BrownianCheck, c),
            Command::RateFit(c) => (ExperimentKind::RateFit, c),
            Command::Forward(c) => (ExperimentKind::Forward, c),
            Command::Acceptance { .. } => return None,
        };
        Some(kind)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var("MFBSDE_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("MFBSDE_THREADS must be a positive integer, got '{text}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}

fn build_config(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(CliError::Config(format!("`kind`: config is for '{k}' but the subcommand is '{kind}'")));
        }
    }
    cfg.kind = Some(kind);
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = Some(out.clone());
    }
    if let Some(list) = &c.n_list {
        cfg.particles.n_list = list.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<(), CliError> {
    let bytes = report.to_bytes();
    match out {
        Some(path) => File::create(path)?.write_all(&bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    if let Command::Acceptance { seed } = cli.command {
        let outcomes = acceptance_suite(seed).map_err(CliError::Config)?;
        for o in &outcomes {
            println!("{}", o.summary_line());
        }
        let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.id.to_string()).collect();
        if failed.is_empty() {
            return Ok(EXIT_PASS);
        }
        eprintln!("failing criteria: {}", failed.join(", "));
        return Ok(EXIT_CRITERION);
    }
    let (kind, common) = cli.command.experiment().expect("experiment subcommand");
    let cfg = build_config(kind, common)?;
    match run_experiment(kind, &cfg) {
        Ok(report) => {
            emit(&report, cfg.out.as_ref())?;
            Ok(if report.passed() { EXIT_PASS } else { EXIT_CRITERION })
        }
        Err(CliError::Partial { source, partial }) => {
            emit(&partial, cfg.out.as_ref())?;
            Err(*source)
        }
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
