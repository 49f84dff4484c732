//! Command-line front end: `run` evaluates a scenario file into a CSV or
//! JSON table, `validate` reports every problem in one.
//!
//! Exit status is 0 on success, 1 for unreadable or invalid input and 2
//! when a solver fails to converge.

pub mod driver;
pub mod output;
pub mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::Error;
use output::Format;
use scenario::LoadOptions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "infopolicy",
    version,
    about = "Rate-utility, Gibbs and proportionality sweeps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a scenario file and write its table.
    Run {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the number of processors.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override every solver tolerance in the scenario.
        #[arg(long)]
        tol: Option<f64>,
        /// Seed for random inputs.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate {
        path: PathBuf,
        /// Tolerance override to validate alongside the file.
        #[arg(long)]
        tol: Option<f64>,
        /// Seed for random inputs.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn read(path: &Path, err: &mut dyn Write) -> Option<String> {
    match fs::read_to_string(path) {
        Ok(text) => Some(text),
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            None
        }
    }
}

fn load(path: &Path, opts: &LoadOptions, err: &mut dyn Write) -> Result<scenario::Scenario, i32> {
    let text = read(path, err).ok_or(EXIT_INVALID)?;
    scenario::load(&text, opts).map_err(|issues| {
        for issue in &issues {
            let _ = writeln!(err, "error: {}: {issue}", path.display());
        }
        EXIT_INVALID
    })
}

/// Runs a parsed command, writing data to `out` and diagnostics to `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Validate { path, tol, seed } => match load(&path, &LoadOptions { tol, seed }, err)
        {
            Ok(s) => {
                let _ = writeln!(out, "{}: valid {} scenario", path.display(), s.kind.name());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run {
            path,
            format,
            out: out_path,
            jobs,
            tol,
            seed,
        } => {
            let scenario = match load(&path, &LoadOptions { tol, seed }, err) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = jobs {
                if n == 0 {
                    let _ = writeln!(err, "error: --jobs must be at least 1");
                    return EXIT_INVALID;
                }
                pool = pool.num_threads(n);
            }
            let pool = match pool.build() {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(err, "error: cannot start worker pool: {e}");
                    return EXIT_INVALID;
                }
            };
            let report = match pool.install(|| driver::run(&scenario, tol)) {
                Ok(r) => r,
                Err(e @ Error::NotConverged { .. }) => {
                    let _ = writeln!(err, "error: {}: {e}", path.display());
                    return EXIT_NOT_CONVERGED;
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", path.display());
                    return EXIT_INVALID;
                }
            };
            for w in &report.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            let written = match &out_path {
                Some(p) => fs::File::create(p).and_then(|mut f| {
                    report.table.write(format, &mut f)?;
                    f.flush()
                }),
                None => report.table.write(format, out),
            };
            if let Err(e) = written {
                let target = out_path
                    .as_ref()
                    .map_or("stdout".into(), |p| p.display().to_string());
                let _ = writeln!(err, "error: cannot write {target}: {e}");
                return EXIT_INVALID;
            }
            if report.failed_points > 0 {
                let _ = writeln!(
                    err,
                    "error: {} grid point(s) did not converge",
                    report.failed_points
                );
                return EXIT_NOT_CONVERGED;
            }
            EXIT_OK
        }
    }
}
