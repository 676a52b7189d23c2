//! The `chatter` command line.
//!
//! Exit codes: 0 converged / all checks passed, 2 shooting budget exhausted,
//! 1 any error or failed check.

pub mod config;
pub mod export;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use crate::problems::{tables, DemandProfile, FixedCostMode};
use crate::propagation::{self, ReplayMeasurements};
use crate::shooting::{self, Termination};
use crate::validation::{self, ValidationTarget};

pub use config::{ProblemKind, SolveConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "chatter", version, about = "Near-optimal control by chattering and shooting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a built-in problem and export trajectory, schedule and convergence log.
    Solve(Box<SolveArgs>),
    /// Run an oracle comparison.
    Validate {
        #[arg(value_enum)]
        target: ValidationTarget,
    },
    /// Write the embedded data tables as CSV.
    ExportFixtures {
        #[arg(long, default_value = "fixtures")]
        out_dir: PathBuf,
    },
}

/// Every flag overrides the matching key of `--config`.
#[derive(Debug, Default, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    #[arg(long)]
    pub intervals: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub level_cap: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta_p: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Comma-separated initial costate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub demand: Option<DemandProfile>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long, value_enum)]
    pub fixed_cost_mode: Option<FixedCostMode>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SolveArgs {
    pub fn resolve(&self) -> anyhow::Result<SolveConfig> {
        let mut cfg = match &self.config {
            Some(path) => SolveConfig::load(path)?,
            None => SolveConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        take!(problem, intervals, levels, level_cap, gamma, delta_p, eps, max_iters, ridge, demand, amplitude, period, fixed_cost_mode, out_dir);
        if let Some(p0) = &self.p0 {
            cfg.p0 = Some(p0.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Maps `CHATTER_LOG` (`quiet`, `info`, `debug`) to a log level; unset or
/// unknown values mean `info`.
pub fn log_level(value: Option<&str>) -> log::LevelFilter {
    match value.map(str::trim) {
        Some("quiet") => log::LevelFilter::Off,
        Some("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    }
}

fn init_logging() {
    let level = log_level(std::env::var("CHATTER_LOG").ok().as_deref());
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => args.resolve().and_then(|cfg| run_solve(&cfg)),
        Command::Validate { target } => run_validate(target),
        Command::ExportFixtures { out_dir } => export_fixtures(&out_dir).map(|()| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn run_solve(cfg: &SolveConfig) -> anyhow::Result<i32> {
    let problem = cfg.build_problem().context("building problem")?;
    let partition = cfg.partition(&problem)?;
    let shooting_cfg = cfg.shooting()?;
    let settings = cfg.propagation();
    info!(
        "solving {} with {} intervals, {} levels per dimension (cap {})",
        problem.name(),
        cfg.intervals,
        cfg.levels,
        cfg.level_cap
    );
    let result = shooting::solve_with_progress(&problem, &partition, &shooting_cfg, &settings, |r| {
        info!("iteration {:>4}  residual {:.6e}  cost {:.6e}", r.iteration, r.residual, r.cost);
    })
    .context("shooting")?;

    let exported = match &cfg.measurements {
        None => result.trajectory.clone(),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut replay = ReplayMeasurements::from_csv(&text)?;
            propagation::propagate_with_feedback(&problem, &partition, &result.p0_final, &settings, Some(&mut replay))
                .context("replaying measurements")?
        }
    };
    export::write_outputs(&cfg.out_dir, &problem, &result, &exported)?;
    info!(
        "{} after {} iterations, residual {:.6e}, cost {:.6e}; outputs in {}",
        if result.converged { "converged" } else { "not converged" },
        result.iterations,
        result.final_residual,
        exported.accumulated_cost,
        cfg.out_dir.display()
    );
    Ok(match result.termination {
        Termination::Converged => EXIT_OK,
        Termination::BudgetExhausted => EXIT_BUDGET,
        Termination::PropagationFailed(e) => {
            eprintln!("error: shooting stopped early: {e}");
            EXIT_ERROR
        }
    })
}

pub fn run_validate(target: ValidationTarget) -> anyhow::Result<i32> {
    let report = validation::validate(target, validation::DEFAULT_SEED)?;
    print!("{report}");
    if report.passed() {
        println!("validate {target}: all checks passed");
        Ok(EXIT_OK)
    } else {
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        println!("validate {target}: failed checks: {}", failed.join(", "));
        Ok(EXIT_ERROR)
    }
}

pub fn export_fixtures(dir: &std::path::Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, body) in [
        (tables::ITEMS_FIXTURE_NAME, tables::render_items_csv()),
        (tables::CUSTOMERS_FIXTURE_NAME, tables::render_customers_csv()),
        (tables::SUPPLIERS_FIXTURE_NAME, tables::render_suppliers_csv()),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_levels() {
        assert_eq!(log_level(Some("quiet")), log::LevelFilter::Off);
        assert_eq!(log_level(Some("debug")), log::LevelFilter::Debug);
        assert_eq!(log_level(None), log::LevelFilter::Info);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"problem": "supply-chain", "intervals": 12, "gamma": 0.25}"#).unwrap();
        let cli = Cli::try_parse_from([
            "chatter",
            "solve",
            "--config",
            path.to_str().unwrap(),
            "--intervals",
            "40",
            "--p0",
            "-1,2.5",
        ])
        .unwrap();
        let Command::Solve(args) = cli.command else { panic!() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.problem, ProblemKind::SupplyChain);
        assert_eq!(cfg.intervals, 40);
        assert_eq!(cfg.gamma, 0.25);
        assert_eq!(cfg.p0, Some(vec![-1.0, 2.5]));
    }

    #[test]
    fn zero_budget_rejected() {
        assert_eq!(run(["chatter", "solve", "--problem", "lqr", "--max-iters", "0"]), EXIT_ERROR);
        assert_eq!(run(["chatter", "solve", "--bogus"]), EXIT_ERROR);
    }
}
