//! Self-checks against independent oracles, shared by the CLI `validate`
//! subcommand and the test suites.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chattering::{self, GridParams};
use crate::error::Result;
use crate::model::{self, ControlKind, ControlProblem, FdStep, HamiltonianContext};
use crate::problems::{self, tables, DemandProfile};
use crate::propagation::{PropagationSettings, TimePartition};
use crate::shooting::{self, ShootingConfig};

pub const DEFAULT_SEED: u64 = 0x5eed_c4a7;
pub const LP_INSTANCES: usize = 1000;
pub const GRADIENT_POINTS: usize = 1000;
/// L∞ relative state error allowed against the closed-form LQR solution.
pub const LQR_STATE_TOLERANCE: f64 = 0.05;
pub const LQR_COST_TOLERANCE: f64 = 0.05;
pub const LQR_INTERVALS: usize = 100;
pub const LQR_LEVELS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationTarget {
    Lqr,
    Lp,
    Gradients,
    Tables,
}

impl fmt::Display for ValidationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationTarget::Lqr => "lqr",
            ValidationTarget::Lp => "lp",
            ValidationTarget::Gradients => "gradients",
            ValidationTarget::Tables => "tables",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub target: ValidationTarget,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn validate(target: ValidationTarget, seed: u64) -> Result<ValidationReport> {
    match target {
        ValidationTarget::Lqr => validate_lqr(),
        ValidationTarget::Lp => validate_lp(seed, LP_INSTANCES),
        ValidationTarget::Gradients => validate_gradients(seed, GRADIENT_POINTS),
        ValidationTarget::Tables => Ok(validate_tables()),
    }
}

/// Outcome of the LQR shooting run compared with the closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrFidelity {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub max_relative_state_error: f64,
    pub cost: f64,
    pub cost_relative_error: f64,
    pub elapsed: Duration,
}

pub fn lqr_fidelity(intervals: usize, levels_per_dim: usize) -> Result<LqrFidelity> {
    let start = Instant::now();
    let problem = problems::build_lqr();
    let partition = TimePartition::uniform(problem.horizon(), intervals)?;
    let settings = PropagationSettings {
        grid: GridParams {
            levels_per_dim,
            ..GridParams::default()
        },
        ..PropagationSettings::default()
    };
    let result = shooting::solve(&problem, &partition, &ShootingConfig::default(), &settings)?;
    let max_relative_state_error = result
        .trajectory
        .points
        .iter()
        .map(|pt| {
            let exact = problems::lqr_analytic_solution(pt.t).x;
            ((pt.x[0] - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    let j_star = problems::lqr_analytic_solution(0.0).j_star;
    let cost = result.trajectory.accumulated_cost;
    Ok(LqrFidelity {
        converged: result.converged,
        iterations: result.iterations,
        final_residual: result.final_residual,
        max_relative_state_error,
        cost,
        cost_relative_error: ((cost - j_star) / j_star).abs(),
        elapsed: start.elapsed(),
    })
}

pub fn validate_lqr() -> Result<ValidationReport> {
    let fid = lqr_fidelity(LQR_INTERVALS, LQR_LEVELS)?;
    Ok(ValidationReport {
        target: ValidationTarget::Lqr,
        checks: vec![
            Check::new(
                "shooting converged",
                fid.converged,
                format!("{} iterations, residual {:e}", fid.iterations, fid.final_residual),
            ),
            Check::new(
                "state error",
                fid.max_relative_state_error <= LQR_STATE_TOLERANCE,
                format!(
                    "max relative x-error {:.6} (limit {LQR_STATE_TOLERANCE})",
                    fid.max_relative_state_error
                ),
            ),
            Check::new(
                "accumulated cost",
                fid.cost_relative_error <= LQR_COST_TOLERANCE,
                format!(
                    "J = {:.6}, J* = {:.6}, relative error {:.6}",
                    fid.cost,
                    problems::lqr_analytic_solution(0.0).j_star,
                    fid.cost_relative_error
                ),
            ),
        ],
    })
}

/// Random LP instance with `1..=8` levels; half of them are drawn from a
/// coarse lattice so exact ties are common.
pub fn random_lp_instance(rng: &mut impl Rng) -> Vec<f64> {
    let k = rng.gen_range(1..=8);
    if rng.gen_bool(0.5) {
        (0..k).map(|_| rng.gen_range(-3i32..=3) as f64 * 0.5).collect()
    } else {
        (0..k).map(|_| rng.gen_range(-1e3..1e3)).collect()
    }
}

/// Checks one instance against enumeration of the simplex vertices.
pub fn check_lp_instance(h: &[f64]) -> std::result::Result<(), String> {
    let measure = chattering::solve_measure_lp(h).map_err(|e| e.to_string())?;
    let w = measure.weights();
    let vertex_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let argmin: Vec<usize> = (0..h.len())
        .filter(|&k| h[k] - vertex_min <= chattering::LP_TIE_TOLERANCE)
        .collect();
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-12 || w.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(format!("weights {w:?} leave the simplex"));
    }
    if measure.support() != argmin {
        return Err(format!("support {:?} differs from vertex argmin {argmin:?} for {h:?}", measure.support()));
    }
    let objective: f64 = h.iter().zip(w).map(|(a, b)| a * b).sum();
    if (objective - vertex_min).abs() > 1e-12 * vertex_min.abs().max(1.0) {
        return Err(format!("objective {objective} vs vertex minimum {vertex_min}"));
    }
    Ok(())
}

pub fn validate_lp(seed: u64, instances: usize) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for i in 0..instances {
        let h = random_lp_instance(&mut rng);
        if let Err(msg) = check_lp_instance(&h) {
            failures.push(format!("instance {i}: {msg}"));
        }
    }
    let passed = instances - failures.len();
    Ok(ValidationReport {
        target: ValidationTarget::Lp,
        checks: vec![Check::new(
            "vertex enumeration",
            failures.is_empty(),
            match failures.first() {
                None => format!("{passed}/{instances} instances (seed {seed})"),
                Some(first) => format!("{passed}/{instances} instances (seed {seed}); {first}"),
            },
        )],
    })
}

/// Largest analytic-vs-FD violation and bitwise `∂H/∂p = f` mismatches.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSummary {
    pub points: usize,
    /// Points where `|analytic − fd|∞ > max(1e-6, 1e-4 ‖analytic‖)`.
    pub tolerance_failures: usize,
    /// Largest `|analytic − fd|∞ / max(1e-6, 1e-4 ‖analytic‖)` seen.
    pub worst_ratio: f64,
    pub costate_mismatches: usize,
}

pub fn gradient_tolerance(grad: &[f64]) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    (1e-4 * norm).max(1e-6)
}

fn sample_control(problem: &ControlProblem, rng: &mut impl Rng) -> Vec<f64> {
    (0..problem.control_dim())
        .map(|d| {
            let (lo, hi) = (problem.control_lower()[d], problem.control_upper()[d]);
            match problem.control_kinds()[d] {
                ControlKind::SemiContinuous { .. } if rng.gen_bool(0.3) => lo,
                ControlKind::SemiContinuous { on_min } => rng.gen_range(on_min..=hi),
                ControlKind::Continuous => rng.gen_range(lo..=hi),
            }
        })
        .collect()
}

pub fn gradient_summary(
    problem: &ControlProblem,
    points: usize,
    rng: &mut impl Rng,
    mut sample_state: impl FnMut(&mut dyn rand::RngCore) -> (f64, Vec<f64>, Vec<f64>),
) -> Result<GradientSummary> {
    let mut summary = GradientSummary {
        points,
        tolerance_failures: 0,
        worst_ratio: 0.0,
        costate_mismatches: 0,
    };
    for _ in 0..points {
        let (t, x, p) = sample_state(rng);
        let u = sample_control(problem, rng);
        let ctx = HamiltonianContext::new(t, &x, &p);
        let analytic = model::grad_h_state(problem, &ctx, &u, FdStep::default())?;
        let fd = model::grad_h_state_fd(problem, &ctx, &u, FdStep::default())?;
        let gap = analytic.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ratio = gap / gradient_tolerance(&analytic);
        summary.worst_ratio = summary.worst_ratio.max(ratio);
        if ratio > 1.0 {
            summary.tolerance_failures += 1;
        }
        let dh_dp = model::grad_h_costate(problem, &ctx, &u)?;
        let f = problem.dynamics(t, &x, &u)?;
        if dh_dp.iter().zip(&f).any(|(a, b)| a.to_bits() != b.to_bits()) {
            summary.costate_mismatches += 1;
        }
    }
    Ok(summary)
}

/// LQR states in `[-20, 20]`, costates in `[-50, 50]`.
pub fn lqr_gradient_summary(seed: u64, points: usize) -> Result<GradientSummary> {
    let problem = problems::build_lqr();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gradient_summary(&problem, points, &mut rng, |rng| {
        (
            rng.gen_range(0.0..=1.0),
            vec![rng.gen_range(-20.0..20.0)],
            vec![rng.gen_range(-50.0..50.0)],
        )
    })
}

/// Supply chain with seasonal demand; inventories and unmet demand in
/// `[0, 50]`, costates in `[-1e6, 1e6]`.
pub fn supply_chain_gradient_summary(seed: u64, points: usize) -> Result<GradientSummary> {
    let demand = problems::synthetic_demand(DemandProfile::Seasonal, 20.0, 5.0)?;
    let problem = problems::build_supply_chain(&demand, 5.0, 200)?;
    let n = problem.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    gradient_summary(&problem, points, &mut rng, |rng| {
        (
            rng.gen_range(0.0..=5.0),
            (0..n).map(|_| rng.gen_range(0.0..50.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1e6..1e6)).collect(),
        )
    })
}

pub fn validate_gradients(seed: u64, points: usize) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    for (name, summary) in [
        ("lqr", lqr_gradient_summary(seed, points)?),
        ("supply-chain", supply_chain_gradient_summary(seed, points)?),
    ] {
        checks.push(Check::new(
            format!("{name} analytic vs finite difference"),
            summary.tolerance_failures == 0,
            format!(
                "{}/{} points within max(1e-6, 1e-4·‖grad‖), worst ratio {:.3e}",
                summary.points - summary.tolerance_failures,
                summary.points,
                summary.worst_ratio
            ),
        ));
        checks.push(Check::new(
            format!("{name} dH/dp equals f"),
            summary.costate_mismatches == 0,
            format!("{} bitwise mismatches in {} points", summary.costate_mismatches, summary.points),
        ));
    }
    Ok(ValidationReport {
        target: ValidationTarget::Gradients,
        checks,
    })
}

pub fn validate_tables() -> ValidationReport {
    let checks = tables::check_tables()
        .into_iter()
        .map(|c| {
            let detail = c.first_difference.clone().unwrap_or_else(|| "identical after canonical formatting".into());
            Check::new(c.name, c.matches, detail)
        })
        .collect();
    ValidationReport {
        target: ValidationTarget::Tables,
        checks,
    }
}
