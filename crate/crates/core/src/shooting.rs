//! Variation-of-extremals shooting on the initial costate.
//!
//! Each iteration propagates the nominal trajectory from `p0`, checks the
//! transversality residual `p_T − ∂Ψ/∂x(x_T)`, estimates `∂x_T/∂p0` and
//! `∂p_T/∂p0` by forward differences (one perturbed run per costate
//! coordinate) and applies the damped correction
//! `p0 ← p0 + γ (Ψ_xx P_x − P_p)⁻¹ (p_T − Ψ_x)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ChatterError, Result};
use crate::model::{self, ControlProblem};
use crate::propagation::{self, PropagationSettings, TimePartition, Trajectory};

/// Condition estimates above this make the correction matrix singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Costate perturbation used for finite-difference sensitivities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationSize {
    Absolute(f64),
    /// `δp = r · max(1, ‖p0‖)`, re-evaluated every iteration.
    Relative(f64),
}

impl PerturbationSize {
    pub fn for_costate(&self, p0: &[f64]) -> f64 {
        match *self {
            PerturbationSize::Absolute(d) => d,
            PerturbationSize::Relative(r) => r * norm(p0).max(1.0),
        }
    }
}

/// How perturbed trajectories for the sensitivity estimate are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SensitivityMode {
    /// Each perturbed run regenerates levels and re-solves the interval LPs.
    #[default]
    Resolve,
    /// Perturbed runs reuse the nominal chattering measures. Gives the exact
    /// derivative of the current control pattern when level switches make
    /// the resolved map jump.
    FrozenMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig {
    /// Step parameter `γ ∈ (0, 1]`.
    pub gamma: f64,
    pub delta_p: PerturbationSize,
    /// Convergence tolerance on the Euclidean transversality residual.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Diagonal shift added to the correction matrix before solving.
    pub ridge: f64,
    /// Initial costate guess; zeros when `None`.
    pub p0_initial: Option<Vec<f64>>,
    pub sensitivity: SensitivityMode,
    /// Step halvings allowed after a correction that raised the residual;
    /// zero gives the plain damped iteration.
    pub max_backtracks: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            gamma: 0.5,
            delta_p: PerturbationSize::Relative(1e-3),
            epsilon: 1e-3,
            max_iterations: 500,
            ridge: 1e-8,
            p0_initial: None,
            sensitivity: SensitivityMode::Resolve,
            max_backtracks: 8,
        }
    }
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ChatterError::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        let dp = match self.delta_p {
            PerturbationSize::Absolute(d) | PerturbationSize::Relative(d) => d,
        };
        if !(dp.is_finite() && dp > 0.0) {
            return Err(ChatterError::Config(format!("delta-p must be positive, got {dp}")));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(ChatterError::Config(format!("eps must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations < 1 {
            return Err(ChatterError::Config("max-iters must be at least 1".into()));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(ChatterError::Config(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        if let Some(p0) = &self.p0_initial {
            if p0.iter().any(|v| !v.is_finite()) {
                return Err(ChatterError::Config("p0 must be finite".into()));
            }
        }
        Ok(())
    }
}

/// `P_x = ∂x_T/∂p0` and `P_p = ∂p_T/∂p0`; column `j` belongs to `p0[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEstimate {
    pub state: DMatrix<f64>,
    pub costate: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionKind {
    Newton,
    /// Plain residual step used when the correction matrix is singular.
    GradientFallback,
    /// The previous correction raised the residual; its step was halved.
    Backtrack,
}

/// One line of solver progress.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub cost: f64,
    pub p0: Vec<f64>,
    /// The correction applied after this iteration's check, if any.
    pub correction: Option<CorrectionKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    BudgetExhausted,
    /// A later propagation failed; the best earlier iterate is returned.
    PropagationFailed(ChatterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Best-residual trajectory.
    pub trajectory: Trajectory,
    /// Initial costate that produced `trajectory`.
    pub p0_final: Vec<f64>,
    pub final_residual: f64,
    pub best_iteration: usize,
    pub termination: Termination,
    pub fallback_steps: usize,
}

struct Trial {
    anchor: Vec<f64>,
    direction: Vec<f64>,
    scale: f64,
    halvings: usize,
}

impl Trial {
    fn point(&self) -> Vec<f64> {
        self.anchor.iter().zip(&self.direction).map(|(p, y)| p + self.scale * y).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Transversality residual `p_T − ∂Ψ/∂x(x_T)`.
pub fn transversality_residual(problem: &ControlProblem, trajectory: &Trajectory) -> Result<Vec<f64>> {
    let terminal = trajectory.terminal();
    let target = model::terminal_costate(problem, &terminal.x)?;
    Ok(terminal.p.iter().zip(&target).map(|(p, t)| p - t).collect())
}

/// Forward-difference sensitivities of the terminal state and costate with
/// respect to each coordinate of `p0` (`n + 1` propagations).
pub fn finite_diff_sensitivities(
    problem: &ControlProblem,
    partition: &TimePartition,
    p0: &[f64],
    delta_p: f64,
    settings: &PropagationSettings,
) -> Result<SensitivityEstimate> {
    let nominal = propagation::propagate_forward(problem, partition, p0, settings)?;
    sensitivities_around(problem, partition, p0, &nominal, delta_p, SensitivityMode::Resolve, settings)
}

fn sensitivities_around(
    problem: &ControlProblem,
    partition: &TimePartition,
    p0: &[f64],
    nominal: &Trajectory,
    delta_p: f64,
    mode: SensitivityMode,
    settings: &PropagationSettings,
) -> Result<SensitivityEstimate> {
    if !(delta_p.is_finite() && delta_p > 0.0) {
        return Err(ChatterError::Config(format!("delta-p must be positive, got {delta_p}")));
    }
    let n = problem.state_dim();
    let base = nominal.terminal();
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut perturbed = p0.to_vec();
            perturbed[j] += delta_p;
            let run = match mode {
                SensitivityMode::Resolve => propagation::propagate_forward(problem, partition, &perturbed, settings),
                SensitivityMode::FrozenMeasure => {
                    propagation::propagate_frozen(problem, partition, &perturbed, nominal, settings)
                }
            };
            run.map(|traj| {
                    let end = traj.terminal();
                    let dx: Vec<f64> = end.x.iter().zip(&base.x).map(|(a, b)| (a - b) / delta_p).collect();
                    let dp: Vec<f64> = end.p.iter().zip(&base.p).map(|(a, b)| (a - b) / delta_p).collect();
                    (dx, dp)
                })
                .map_err(|e| e.in_perturbation(j))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state = DMatrix::zeros(n, n);
    let mut costate = DMatrix::zeros(n, n);
    for (j, (dx, dp)) in columns.into_iter().enumerate() {
        state.set_column(j, &DVector::from_vec(dx));
        costate.set_column(j, &DVector::from_vec(dp));
    }
    if state.iter().chain(costate.iter()).any(|v| !v.is_finite()) {
        return Err(ChatterError::NonFiniteEvaluation { what: "sensitivity estimate", t: partition.horizon() });
    }
    Ok(SensitivityEstimate { state, costate })
}

/// Damped correction `p0 + γ y` with `(Ψ_xx P_x − P_p + ridge·I) y = p_T − Ψ_x(x_T)`.
pub fn update_initial_costate(
    p0: &[f64],
    sens: &SensitivityEstimate,
    p_terminal: &[f64],
    x_terminal: &[f64],
    problem: &ControlProblem,
    gamma: f64,
    ridge: f64,
) -> Result<Vec<f64>> {
    let step = correction_direction(sens, p_terminal, x_terminal, problem, ridge)?;
    Ok(p0.iter().zip(&step).map(|(p, y)| p + gamma * y).collect())
}

/// Undamped correction `y`; zero when the residual is exactly zero.
fn correction_direction(
    sens: &SensitivityEstimate,
    p_terminal: &[f64],
    x_terminal: &[f64],
    problem: &ControlProblem,
    ridge: f64,
) -> Result<Vec<f64>> {
    let n = p_terminal.len();
    let hessian = model::terminal_hessian(problem, x_terminal)?;
    let target = model::terminal_costate(problem, x_terminal)?;
    let residual = DVector::from_iterator(n, p_terminal.iter().zip(&target).map(|(p, t)| p - t));
    if residual.iter().all(|r| *r == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let matrix = &hessian * &sens.state - &sens.costate + DMatrix::identity(n, n) * ridge;
    let singular = matrix.clone().singular_values();
    let (smax, smin) = singular
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(ChatterError::SingularCorrection { condition });
    }
    let step = matrix
        .lu()
        .solve(&residual)
        .ok_or(ChatterError::SingularCorrection { condition })?;
    Ok(step.iter().copied().collect())
}

/// Runs the shooting loop until the residual drops below `config.epsilon`
/// or the iteration budget is spent.
pub fn solve(
    problem: &ControlProblem,
    partition: &TimePartition,
    config: &ShootingConfig,
    settings: &PropagationSettings,
) -> Result<ShootingResult> {
    solve_with_progress(problem, partition, config, settings, |_| {})
}

/// As [`solve`], reporting every iteration to `progress`.
pub fn solve_with_progress(
    problem: &ControlProblem,
    partition: &TimePartition,
    config: &ShootingConfig,
    settings: &PropagationSettings,
    mut progress: impl FnMut(&IterationRecord),
) -> Result<ShootingResult> {
    config.validate()?;
    settings.grid.validate()?;
    let n = problem.state_dim();
    let mut p0 = config.p0_initial.clone().unwrap_or_else(|| vec![0.0; n]);
    if p0.len() != n {
        return Err(ChatterError::DimensionMismatch {
            what: "initial costate guess",
            expected: n,
            found: p0.len(),
        });
    }

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Trajectory, Vec<f64>)> = None;
    let mut termination = Termination::BudgetExhausted;
    let mut fallback_steps = 0;
    let mut trial: Option<Trial> = None;

    let stop = |err: ChatterError, best: &Option<_>| -> Result<Termination> {
        let fatal = matches!(err.root(), ChatterError::NonFiniteEvaluation { .. }) || best.is_none();
        if fatal {
            Err(err)
        } else {
            log::warn!("stopping shooting early: {err}");
            Ok(Termination::PropagationFailed(err))
        }
    };

    for iteration in 1..=config.max_iterations {
        let nominal = match propagation::propagate_forward(problem, partition, &p0, settings) {
            Ok(t) => t,
            Err(e) => {
                termination = stop(e, &best)?;
                break;
            }
        };
        let residual_vec = transversality_residual(problem, &nominal)?;
        let residual = norm(&residual_vec);
        history.push(residual);
        let improved = best.as_ref().is_none_or(|(r, ..)| residual < *r);
        let cost = nominal.accumulated_cost;
        let converged = residual < config.epsilon;
        let last = iteration == config.max_iterations;

        let mut record = IterationRecord {
            iteration,
            residual,
            cost,
            p0: p0.clone(),
            correction: None,
        };

        if converged || last {
            if improved {
                best = Some((residual, iteration, nominal, p0.clone()));
            }
            progress(&record);
            if converged {
                termination = Termination::Converged;
            }
            break;
        }

        // A correction that made things worse is retried from its anchor with
        // half the step, reusing the anchor's sensitivities.
        if let Some(trial) = trial.as_mut() {
            if !improved && trial.halvings < config.max_backtracks {
                trial.halvings += 1;
                trial.scale *= 0.5;
                record.correction = Some(CorrectionKind::Backtrack);
                progress(&record);
                p0 = trial.point();
                continue;
            }
        }

        let delta_p = config.delta_p.for_costate(&p0);
        let sens = match sensitivities_around(problem, partition, &p0, &nominal, delta_p, config.sensitivity, settings) {
            Ok(s) => s,
            Err(e) => {
                if improved {
                    best = Some((residual, iteration, nominal, p0.clone()));
                }
                progress(&record);
                termination = stop(e, &best)?;
                break;
            }
        };
        let terminal = nominal.terminal();
        let direction = match correction_direction(&sens, &terminal.p, &terminal.x, problem, config.ridge) {
            Ok(y) => {
                record.correction = Some(CorrectionKind::Newton);
                y
            }
            Err(ChatterError::SingularCorrection { condition }) => {
                log::debug!("iteration {iteration}: singular correction (condition {condition:e}), gradient fallback");
                fallback_steps += 1;
                record.correction = Some(CorrectionKind::GradientFallback);
                residual_vec.iter().map(|r| -r).collect()
            }
            Err(e) => return Err(e),
        };
        if improved {
            best = Some((residual, iteration, nominal, p0.clone()));
        }
        progress(&record);
        let next = Trial {
            anchor: p0,
            direction,
            scale: config.gamma,
            halvings: 0,
        };
        p0 = next.point();
        if p0.iter().any(|v| !v.is_finite()) {
            return Err(ChatterError::NonFiniteEvaluation { what: "costate correction", t: 0.0 });
        }
        trial = Some(next);
    }

    let (final_residual, best_iteration, trajectory, p0_final) =
        best.expect("at least one iteration ran");
    Ok(ShootingResult {
        converged: termination == Termination::Converged,
        iterations: history.len(),
        residual_history: history,
        trajectory,
        p0_final,
        final_residual,
        best_iteration,
        termination,
        fallback_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chattering::GridParams;

    fn still(n: usize) -> ControlProblem {
        ControlProblem::builder(n, 1, |_, _, _| 0.0, |_, _, _, out| out.fill(0.0))
            .initial_state(vec![1.0; n])
            .build()
            .unwrap()
    }

    fn settings() -> PropagationSettings {
        PropagationSettings {
            grid: GridParams { levels_per_dim: 3, cap: 16 },
            ..Default::default()
        }
    }

    #[test]
    fn static_problem_sensitivities() {
        let problem = still(3);
        let part = TimePartition::uniform(1.0, 5).unwrap();
        let sens = finite_diff_sensitivities(&problem, &part, &[0.3, -1.0, 2.0], 1e-3, &settings()).unwrap();
        assert_eq!(sens.state, DMatrix::zeros(3, 3));
        assert!((sens.costate.clone() - DMatrix::identity(3, 3)).abs().max() < 1e-9);
    }

    #[test]
    fn state_ignores_costate_when_dynamics_do() {
        let problem = ControlProblem::builder(2, 1, |_, _, _| 0.0, |_, x, _, out| {
            out[0] = -x[0];
            out[1] = x[0] - 0.5 * x[1];
        })
        .initial_state(vec![1.0, 2.0])
        .build()
        .unwrap();
        let part = TimePartition::uniform(1.0, 10).unwrap();
        let sens = finite_diff_sensitivities(&problem, &part, &[1.0, 1.0], 1e-3, &settings()).unwrap();
        assert_eq!(sens.state, DMatrix::zeros(2, 2));
    }

    #[test]
    fn scalar_update_example() {
        let problem = still(1);
        let sens = SensitivityEstimate {
            state: DMatrix::zeros(1, 1),
            costate: DMatrix::from_element(1, 1, 2.0),
        };
        let p = update_initial_costate(&[4.0], &sens, &[1.0], &[0.0], &problem, 1.0, 0.0).unwrap();
        assert_eq!(p, vec![3.5]);
        let p = update_initial_costate(&[4.0], &sens, &[0.0], &[0.0], &problem, 1.0, 0.0).unwrap();
        assert_eq!(p, vec![4.0]);
        let singular = SensitivityEstimate {
            state: DMatrix::zeros(1, 1),
            costate: DMatrix::zeros(1, 1),
        };
        let err = update_initial_costate(&[4.0], &singular, &[1.0], &[0.0], &problem, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, ChatterError::SingularCorrection { .. }));
    }

    #[test]
    fn static_problem_converges_in_one_correction() {
        let problem = still(1);
        let part = TimePartition::uniform(1.0, 4).unwrap();
        let config = ShootingConfig {
            gamma: 1.0,
            ridge: 0.0,
            p0_initial: Some(vec![3.0]),
            ..Default::default()
        };
        let result = solve(&problem, &part, &config, &settings()).unwrap();
        assert!(result.converged);
        assert_eq!(result.residual_history.len(), 2);
        assert_eq!(result.residual_history[0], 3.0);
        assert!(result.residual_history[1] < 1e-9);
        assert!(result.p0_final[0].abs() < 1e-9);
    }

    #[test]
    fn geometric_residual_decay() {
        let problem = still(2);
        let part = TimePartition::uniform(1.0, 3).unwrap();
        let config = ShootingConfig {
            gamma: 0.5,
            ridge: 0.0,
            epsilon: 1e-6,
            p0_initial: Some(vec![3.0, -4.0]),
            ..Default::default()
        };
        let mut seen = Vec::new();
        let result = solve_with_progress(&problem, &part, &config, &settings(), |r| seen.push(r.iteration)).unwrap();
        assert!(result.converged);
        for (k, r) in result.residual_history.iter().enumerate() {
            assert!((r - 5.0 * 0.5f64.powi(k as i32)).abs() < 1e-10);
        }
        assert_eq!(seen.len(), result.iterations);
        assert!(result.final_residual < config.epsilon);
    }

    #[test]
    fn budget_exhaustion_returns_best_iterate() {
        let problem = still(1);
        let part = TimePartition::uniform(1.0, 3).unwrap();
        let config = ShootingConfig {
            gamma: 0.5,
            ridge: 0.0,
            max_iterations: 3,
            p0_initial: Some(vec![8.0]),
            ..Default::default()
        };
        let result = solve(&problem, &part, &config, &settings()).unwrap();
        assert!(!result.converged);
        assert_eq!(result.termination, Termination::BudgetExhausted);
        assert_eq!(result.iterations, 3);
        for (r, want) in result.residual_history.iter().zip([8.0, 4.0, 2.0]) {
            assert!((r - want).abs() < 1e-9);
        }
        let min = result.residual_history.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(result.final_residual, min);
        assert!((result.p0_final[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        let problem = still(1);
        let part = TimePartition::uniform(1.0, 3).unwrap();
        for config in [
            ShootingConfig { max_iterations: 0, ..Default::default() },
            ShootingConfig { gamma: 0.0, ..Default::default() },
            ShootingConfig { gamma: 1.5, ..Default::default() },
            ShootingConfig { epsilon: -1.0, ..Default::default() },
            ShootingConfig { ridge: -1.0, ..Default::default() },
            ShootingConfig { delta_p: PerturbationSize::Absolute(0.0), ..Default::default() },
        ] {
            assert!(matches!(solve(&problem, &part, &config, &settings()), Err(ChatterError::Config(_))));
        }
    }

    #[test]
    fn overshoot_is_backtracked() {
        // p_T = 2 p0 + sign jump; a full step from p0 = 1 lands on the far
        // side of the jump at 0 and must be halved.
        let problem = ControlProblem::builder(1, 1, |_, _, _| 0.0, |_, _, _, out| out[0] = 0.0)
            .hamiltonian_x_gradient(|_, _, p, _, out| out[0] = -p[0] - if p[0] > 0.0 { 1.0 } else { -1.0 })
            .build()
            .unwrap();
        let part = TimePartition::uniform(1.0, 1).unwrap();
        let config = ShootingConfig {
            gamma: 1.0,
            ridge: 0.0,
            max_iterations: 6,
            p0_initial: Some(vec![1.0]),
            delta_p: PerturbationSize::Absolute(1e-6),
            ..Default::default()
        };
        let mut kinds = Vec::new();
        let result = solve_with_progress(&problem, &part, &config, &settings(), |r| kinds.push(r.correction)).unwrap();
        assert!(kinds.contains(&Some(CorrectionKind::Backtrack)));
        let min = result.residual_history.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(result.final_residual, min);

        let plain = ShootingConfig { max_backtracks: 0, ..config };
        let mut kinds = Vec::new();
        solve_with_progress(&problem, &part, &plain, &settings(), |r| kinds.push(r.correction)).unwrap();
        assert!(!kinds.contains(&Some(CorrectionKind::Backtrack)));
    }

}
