use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::chattering;
use crate::error::Result;
use crate::model::ControlProblem;
use crate::propagation::Trajectory;
use crate::shooting::{ShootingResult, Termination};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const CONVERGENCE_FILE: &str = "convergence.json";

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t, x_*, p_*, u_*, H, J_cum`; one row per interval start and a terminal
/// row with empty `u`/`H` cells. `J_cum` is the cost accumulated before the
/// row's time; on the terminal row it includes the terminal cost.
pub fn render_trajectory_csv(problem: &ControlProblem, trajectory: &Trajectory) -> Result<String> {
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let mut out = String::from("t");
    for prefix in ["x", "p"] {
        for j in 0..n {
            let _ = write!(out, ",{prefix}_{j}");
        }
    }
    for j in 0..m {
        let _ = write!(out, ",u_{j}");
    }
    out.push_str(",H,J_cum\n");

    let mut cumulative = 0.0;
    for (i, pt) in trajectory.points.iter().enumerate() {
        out.push_str(&num(pt.t));
        for v in pt.x.iter().chain(&pt.p) {
            out.push(',');
            out.push_str(&num(*v));
        }
        match &pt.control {
            Some(c) => {
                for v in &c.u {
                    out.push(',');
                    out.push_str(&num(*v));
                }
                out.push(',');
                out.push_str(&num(c.h_value));
            }
            None => out.push_str(&",".repeat(m + 1)),
        }
        if pt.control.is_none() {
            cumulative += problem.terminal_cost(&pt.x)?;
        }
        out.push(',');
        out.push_str(&num(cumulative));
        out.push('\n');
        if let (Some(c), Some(next)) = (&pt.control, trajectory.points.get(i + 1)) {
            cumulative += c.running_cost * (next.t - pt.t);
        }
    }
    Ok(out)
}

/// One row per chattering segment:
/// `interval,t_start,t_end,level_index,weight,u_0..`.
pub fn render_schedule_csv(problem: &ControlProblem, trajectory: &Trajectory) -> Result<String> {
    let mut out = String::from("interval,t_start,t_end,level_index,weight");
    for j in 0..problem.control_dim() {
        let _ = write!(out, ",u_{j}");
    }
    out.push('\n');
    for (i, pair) in trajectory.points.windows(2).enumerate() {
        let Some(control) = &pair[0].control else { continue };
        let dt = pair[1].t - pair[0].t;
        let signal = chattering::realize_signal(&control.support, &control.measure, pair[0].t, dt)?;
        for seg in signal.segments() {
            let _ = write!(
                out,
                "{i},{},{},{},{}",
                num(seg.start),
                num(seg.end),
                control.level_indices[seg.level_index],
                num(control.measure.weights()[seg.level_index])
            );
            for v in control.support.level(seg.level_index) {
                out.push(',');
                out.push_str(&num(*v));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConvergenceLog<'a> {
    pub problem: &'a str,
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub best_iteration: usize,
    pub final_residual: f64,
    pub residual_history: &'a [f64],
    pub cost: f64,
    pub fallback_steps: usize,
    pub clamp_count: usize,
    pub p0_final: &'a [f64],
    pub x_terminal: &'a [f64],
    pub p_terminal: &'a [f64],
}

pub fn convergence_log<'a>(problem: &'a ControlProblem, result: &'a ShootingResult, exported: &'a Trajectory) -> ConvergenceLog<'a> {
    let terminal = exported.terminal();
    ConvergenceLog {
        problem: problem.name(),
        converged: result.converged,
        termination: match &result.termination {
            Termination::Converged => "converged".into(),
            Termination::BudgetExhausted => "budget-exhausted".into(),
            Termination::PropagationFailed(e) => format!("propagation-failed: {e}"),
        },
        iterations: result.iterations,
        best_iteration: result.best_iteration,
        final_residual: result.final_residual,
        residual_history: &result.residual_history,
        cost: exported.accumulated_cost,
        fallback_steps: result.fallback_steps,
        clamp_count: exported.clamp_count,
        p0_final: &result.p0_final,
        x_terminal: &terminal.x,
        p_terminal: &terminal.p,
    }
}

pub fn write_outputs(
    dir: &Path,
    problem: &ControlProblem,
    result: &ShootingResult,
    exported: &Trajectory,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, body: String| -> anyhow::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write(TRAJECTORY_FILE, render_trajectory_csv(problem, exported)?)?;
    write(SCHEDULE_FILE, render_schedule_csv(problem, exported)?)?;
    let mut json = serde_json::to_string_pretty(&convergence_log(problem, result, exported))?;
    json.push('\n');
    write(CONVERGENCE_FILE, json)
}
