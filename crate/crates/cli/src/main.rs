//! `ksep`: experiment runner for the K-exclusion toolkit.
//!
//! Every run writes one directory:
//!
//! - `manifest.json`: schema version, subcommand, seed, threads, the parsed
//!   config and its raw text, status and failed assertions;
//! - `results.csv`: one table per subcommand (columns below);
//! - `reports/*.json`: full check and test reports.
//!
//! CSV columns:
//!
//! - `simulate`: `t, l, replica, rank, position, rescaled`; empty cells for
//!   ranks beyond the particle count.
//! - `verify-exact`: `check, instance, min_slack, tol, pass`.
//! - `intensity`: `t, l, lo, hi, truncated, untruncated, error,
//!   full_step_route, limit`, sets in rescaled units and times of the limit
//!   theorems.
//! - `kappa-tau`: `kind, t, param, lhs, rhs, error, pass`.
//! - `fit`: `t, test, statistic, p_value, pass`.
//! - `trend`: `t, l, ks_distance, replicas`.
//!
//! Exit status: 0 when every asserted inequality and test holds, 1 when one
//! fails, 2 for configuration errors, 3 for runtime errors.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::{Outcome, RunError};
use crate::config::{ConfigError, ExperimentConfig};

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "ksep", version, about = "K-exclusion simulations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; `KSEP_THREADS` takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "ksep-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Top order statistics of simulated replicas.
    Simulate,
    /// Exact semigroup checks on small instances.
    VerifyExact,
    /// Finite-time intensities against their limits.
    Intensity,
    /// κ and τ along a time grid, with their comparison bounds.
    KappaTau,
    /// Goodness of fit against the limiting Poisson process.
    Fit,
    /// KS distance of the rescaled maximum along the grid.
    Trend,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::VerifyExact => "verify-exact",
            Self::Intensity => "intensity",
            Self::KappaTau => "kappa-tau",
            Self::Fit => "fit",
            Self::Trend => "trend",
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, ConfigError> {
    match std::env::var("KSEP_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::Field {
            path: "KSEP_THREADS".into(),
            message: format!("not a thread count: {v:?}"),
        }),
        Err(_) => Ok(flag),
    }
}

fn write_outputs(dir: &Path, manifest: &serde_json::Value, out: &Outcome) -> std::io::Result<()> {
    let reports = dir.join("reports");
    std::fs::create_dir_all(&reports)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    w.write_record(&out.header)?;
    for row in &out.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    for (name, value) in &out.reports {
        std::fs::write(
            reports.join(format!("{name}.json")),
            serde_json::to_string_pretty(value)? + "\n",
        )?;
    }
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )
}

fn run(cli: &Cli) -> Result<bool, RunError> {
    let (mut cfg, text) = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => (ExperimentConfig::default(), String::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    let threads = thread_count(cli.threads)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(ConfigError::Field {
                path: "threads".into(),
                message: "must be positive".into(),
            }
            .into());
        }
        // fails only if a pool exists already, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = match cli.command {
        Command::Simulate => commands::simulate(&cfg)?,
        Command::VerifyExact => commands::verify_exact(&cfg)?,
        Command::Intensity => commands::intensity_cmd(&cfg)?,
        Command::KappaTau => commands::kappa_tau_cmd(&cfg)?,
        Command::Fit => commands::fit(&cfg)?,
        Command::Trend => commands::trend(&cfg)?,
    };
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "subcommand": cli.command.name(),
        "seed": cfg.run.seed,
        "threads": rayon::current_num_threads(),
        "config": cfg,
        "config_text": text,
        "status": if out.failures.is_empty() { "pass" } else { "fail" },
        "failures": out.failures,
        "created_unix": created,
    });
    write_outputs(&cli.out, &manifest, &out).map_err(|e| RunError::Io(cli.out.display().to_string(), e))?;
    for f in &out.failures {
        eprintln!("FAIL {f}");
    }
    Ok(out.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
