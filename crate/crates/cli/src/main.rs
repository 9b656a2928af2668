//! `scrom`: run FOM/ROM scenarios from TOML configuration files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use rayon::prelude::*;

use scrom::pipeline::report::compare;
use scrom::pipeline::run::{build_basis_command, fom_run_command, rom_run_command, verify_command};
use scrom::pipeline::{RunReport, ScenarioConfig};
use scrom::Error;

#[derive(Parser, Debug)]
#[command(name = "scrom", version, about = "Subdomain-conservative reduced order models")]
struct Cli {
    /// Scenario file; repeat to run several scenarios in parallel.
    #[arg(long = "config", global = true, value_name = "PATH")]
    configs: Vec<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// RNG seed (overrides `seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for data-parallel kernels and scenario batches.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the full-order model; write snapshots and a report.
    FomRun,
    /// Build the configured reduced basis from the stored snapshots.
    BuildBasis,
    /// Integrate the reduced model; write its report.
    RomRun,
    /// Compare two report files against `[compare.thresholds]`.
    Compare { a: PathBuf, b: PathBuf },
    /// Re-audit a stored basis artifact.
    Verify,
}

/// Outcome of one scenario, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Status {
    Ok = 0,
    Failed = 1,
    RuntimeError = 2,
}

fn status_of_error(e: &Error) -> Status {
    match e {
        Error::Config { .. } => Status::Failed,
        _ => Status::RuntimeError,
    }
}

fn load(path: &Path, cli: &Cli, batch: bool) -> scrom::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = if batch {
            let stem = path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_owned());
            out.join(stem)
        } else {
            out.clone()
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_violations(label: &str, what: &str, items: &[String]) -> Status {
    if items.is_empty() {
        return Status::Ok;
    }
    for v in items {
        error!("{label}: {what}: {v}");
    }
    Status::Failed
}

fn run_one(path: &Path, cli: &Cli, batch: bool) -> scrom::Result<Status> {
    let label = path.display().to_string();
    let cfg = load(path, cli, batch)?;
    match &cli.command {
        Command::FomRun => {
            let run = fom_run_command(&cfg)?;
            info!(
                "{label}: FOM finished, {} snapshots written to {}",
                run.snapshots.cols(),
                cfg.output_dir.display()
            );
            Ok(Status::Ok)
        }
        Command::BuildBasis => {
            let art = build_basis_command(&cfg)?;
            let a = &art.audit;
            info!(
                "{label}: {} basis with {} columns; orthonormality {:e}, inclusion {:?}",
                art.kind.name(),
                art.basis.cols(),
                a.orthonormality,
                a.inclusion
            );
            Ok(Status::Ok)
        }
        Command::RomRun => {
            let (report, violations) = rom_run_command(&cfg)?;
            info!(
                "{label}: ROM finished; max subdomain residual {:?}, max mass residual {:?}",
                report.column_max("subdom_res_max"),
                report.column_max("mass_res_max")
            );
            Ok(report_violations(&label, "tolerance", &violations))
        }
        Command::Verify => {
            let outcome = verify_command(&cfg)?;
            let status = report_violations(&label, "audit mismatch", &outcome.mismatches)
                .max(report_violations(&label, "audit limit", &outcome.violations));
            if status == Status::Ok {
                info!("{label}: artifact audit reproduced and within limits");
            }
            Ok(status)
        }
        Command::Compare { a, b } => {
            let ra = RunReport::read(a)?;
            let rb = RunReport::read(b)?;
            let summary = compare(&ra, &rb)?;
            print!("{}", summary.table());
            let breaches: Vec<String> = summary
                .breaches(&cfg.compare.thresholds)
                .into_iter()
                .map(|(c, thr)| format!("{} differs by {:e} (threshold {thr:e})", c.name, c.max_abs))
                .collect();
            Ok(report_violations(&label, "threshold", &breaches))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .init();

    if cli.configs.is_empty() {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(Status::Failed as u8);
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not start {n} worker threads: {e}");
            return ExitCode::from(Status::RuntimeError as u8);
        }
    }

    let batch = cli.configs.len() > 1;
    let statuses: Vec<Status> = cli
        .configs
        .par_iter()
        .map(|path| match run_one(path, &cli, batch) {
            Ok(s) => s,
            Err(e) => {
                error!("{}: {e}", path.display());
                status_of_error(&e)
            }
        })
        .collect();
    let worst = statuses.into_iter().max().unwrap_or(Status::Ok);
    ExitCode::from(worst as u8)
}
