//! Forward propagation of state and costate across the time partition.
//!
//! Each interval solves the chattering LP at its left endpoint and then takes
//! one explicit Euler step of `ẋ = ∂H/∂p`, `ṗ = −∂H/∂x` averaged over the
//! chattering measure.

use crate::chattering::{self, ChatteringMeasure, GridParams, LevelGrid};
use crate::error::{ChatterError, Result};
use crate::model::{self, ControlProblem, FdStep, HamiltonianContext};

#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    times: Vec<f64>,
    deltas: Vec<f64>,
}

impl TimePartition {
    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(ChatterError::Config("the partition needs at least one interval".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ChatterError::Config(format!("horizon must be positive, got {horizon}")));
        }
        let mut times: Vec<f64> = (0..=intervals)
            .map(|i| horizon * i as f64 / intervals as f64)
            .collect();
        times[intervals] = horizon;
        Self::from_times(times)
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(ChatterError::Config("the partition needs at least two time points".into()));
        }
        if times[0] != 0.0 {
            return Err(ChatterError::Config(format!("the partition must start at 0, got {}", times[0])));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChatterError::Config("partition times must be finite and strictly increasing".into()));
        }
        let deltas = times.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(TimePartition { times, deltas })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn intervals(&self) -> usize {
        self.deltas.len()
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct PropagationSettings {
    pub grid: GridParams,
    pub fd_step: FdStep,
}


/// The control applied on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalControl {
    /// Relaxed control `Σ α_k c_k`.
    pub u: Vec<f64>,
    /// Number of levels in the interval's full grid.
    pub grid_size: usize,
    /// Indices (into the full grid) of levels carrying weight.
    pub level_indices: Vec<usize>,
    /// The weighted levels only.
    pub support: LevelGrid,
    /// Weights over `support`.
    pub measure: ChatteringMeasure,
    /// LP objective `Σ α_k H(t_i, x_i, p_i, c_k)`.
    pub h_value: f64,
    /// `g(t_i, x_i, u_i)`.
    pub running_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `None` on the terminal point.
    pub control: Option<IntervalControl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// `Σ g(t_i, x_i, u_i) Δ_i + Ψ(x_T)`.
    pub accumulated_cost: f64,
    /// Number of state components clamped back into bounds.
    pub clamp_count: usize,
}

impl Trajectory {
    pub fn terminal(&self) -> &TrajectoryPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }
}

/// Result of one state step.
#[derive(Debug, Clone, PartialEq)]
pub struct StateStep {
    pub state: Vec<f64>,
    pub clamped: usize,
}

/// Supplies measured states in feedback mode.
pub trait MeasurementSource {
    /// Called before interval `interval` with the predicted state; a returned
    /// vector replaces it.
    fn measure(&mut self, interval: usize, t: f64, predicted: &[f64]) -> Option<Vec<f64>>;
}

/// Replays recorded state overrides keyed by interval index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayMeasurements {
    overrides: std::collections::BTreeMap<usize, Vec<f64>>,
}

impl ReplayMeasurements {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, interval: usize, state: Vec<f64>) {
        self.overrides.insert(interval, state);
    }

    /// Parses `interval,x_0,...,x_{n-1}` rows. A header row and blank lines
    /// are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut replay = Self::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cells = line.split(',').map(str::trim);
            let first = cells.next().unwrap_or_default();
            let Ok(interval) = first.parse::<usize>() else {
                if line_no == 0 {
                    continue;
                }
                return Err(ChatterError::Config(format!("replay line {}: bad interval `{first}`", line_no + 1)));
            };
            let state = cells
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| ChatterError::Config(format!("replay line {}: {e}", line_no + 1)))?;
            replay.insert(interval, state);
        }
        Ok(replay)
    }
}

impl MeasurementSource for ReplayMeasurements {
    fn measure(&mut self, interval: usize, _t: f64, _predicted: &[f64]) -> Option<Vec<f64>> {
        self.overrides.get(&interval).cloned()
    }
}

fn check_measure(grid: &LevelGrid, measure: &ChatteringMeasure) -> Result<()> {
    if grid.len() == measure.len() {
        Ok(())
    } else {
        Err(ChatterError::DimensionMismatch {
            what: "chattering measure",
            expected: grid.len(),
            found: measure.len(),
        })
    }
}

/// `x_{i+1} = x_i + Δ Σ_k α_k f(t_i, x_i, c_k)`, clamped into the state bounds.
pub fn step_state(
    problem: &ControlProblem,
    ctx: &HamiltonianContext<'_>,
    grid: &LevelGrid,
    measure: &ChatteringMeasure,
    dt: f64,
) -> Result<StateStep> {
    check_measure(grid, measure)?;
    let n = problem.state_dim();
    let mut rate = vec![0.0; n];
    let mut f_buf = vec![0.0; n];
    for (w, level) in measure.weights().iter().zip(grid.levels()) {
        if *w == 0.0 {
            continue;
        }
        problem.dynamics_into(ctx.time, ctx.state, level, &mut f_buf)?;
        for (r, f) in rate.iter_mut().zip(&f_buf) {
            *r += w * f;
        }
    }
    let mut state: Vec<f64> = ctx.state.iter().zip(&rate).map(|(x, r)| x + dt * r).collect();
    let mut clamped = 0;
    for (j, v) in state.iter_mut().enumerate() {
        if let Some(lo) = problem.state_lower() {
            if *v < lo[j] {
                *v = lo[j];
                clamped += 1;
            }
        }
        if let Some(hi) = problem.state_upper() {
            if *v > hi[j] {
                *v = hi[j];
                clamped += 1;
            }
        }
    }
    Ok(StateStep { state, clamped })
}

/// `p_{i+1} = p_i − Δ Σ_k α_k ∂H/∂x(t_i, x_i, p_i, c_k)`.
pub fn step_costate(
    problem: &ControlProblem,
    ctx: &HamiltonianContext<'_>,
    grid: &LevelGrid,
    measure: &ChatteringMeasure,
    dt: f64,
    fd_step: FdStep,
) -> Result<Vec<f64>> {
    check_measure(grid, measure)?;
    let n = problem.state_dim();
    let mut rate = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for (w, level) in measure.weights().iter().zip(grid.levels()) {
        if *w == 0.0 {
            continue;
        }
        model::grad_h_state_into(problem, ctx, level, fd_step, &mut grad)?;
        for (r, g) in rate.iter_mut().zip(&grad) {
            *r += w * g;
        }
    }
    Ok(ctx.costate.iter().zip(&rate).map(|(p, r)| p - dt * r).collect())
}

/// Simulates the chattering trajectory from `(x₀, p0)`.
pub fn propagate_forward(
    problem: &ControlProblem,
    partition: &TimePartition,
    p0: &[f64],
    settings: &PropagationSettings,
) -> Result<Trajectory> {
    propagate_with_feedback(problem, partition, p0, settings, None)
}

/// As [`propagate_forward`], querying `measurements` for a replacement state
/// before each interval solve.
pub fn propagate_with_feedback(
    problem: &ControlProblem,
    partition: &TimePartition,
    p0: &[f64],
    settings: &PropagationSettings,
    mut measurements: Option<&mut dyn MeasurementSource>,
) -> Result<Trajectory> {
    let n = problem.state_dim();
    if p0.len() != n {
        return Err(ChatterError::DimensionMismatch {
            what: "initial costate",
            expected: n,
            found: p0.len(),
        });
    }
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(ChatterError::NonFiniteEvaluation { what: "initial costate", t: 0.0 });
    }
    let mut x = problem.initial_state().to_vec();
    let mut p = p0.to_vec();
    let mut points = Vec::with_capacity(partition.intervals() + 1);
    let mut cost = 0.0;
    let mut clamp_count = 0;
    let mut f_buf = vec![0.0; n];

    for (i, (&t, &dt)) in partition.times().iter().zip(partition.deltas()).enumerate() {
        if let Some(source) = measurements.as_deref_mut() {
            if let Some(measured) = source.measure(i, t, &x) {
                if measured.len() != n {
                    return Err(ChatterError::DimensionMismatch {
                        what: "measured state",
                        expected: n,
                        found: measured.len(),
                    }
                    .at_interval(i));
                }
                x = measured;
            }
        }
        let mut interval = || -> Result<(TrajectoryPoint, StateStep, Vec<f64>)> {
            let grid = chattering::generate_levels(problem, i, t, &x, dt, &settings.grid)?;
            let ctx = HamiltonianContext::new(t, &x, &p);
            let h_values = grid
                .levels()
                .iter()
                .map(|level| model::hamiltonian_with(problem, &ctx, level, &mut f_buf))
                .collect::<Result<Vec<f64>>>()?;
            let measure = chattering::solve_measure_lp(&h_values)?.with_interval(i);
            let u = chattering::control_from_measure(&grid, &measure)?;
            let running_cost = problem.running_cost(t, &x, &u)?;
            let h_value = measure.weights().iter().zip(&h_values).map(|(w, h)| w * h).sum();
            let next_x = step_state(problem, &ctx, &grid, &measure, dt)?;
            let next_p = step_costate(problem, &ctx, &grid, &measure, dt, settings.fd_step)?;

            let level_indices = measure.support();
            let support = grid.subset(&level_indices)?;
            let support_weights = level_indices.iter().map(|&k| measure.weights()[k]).collect();
            let control = IntervalControl {
                u,
                grid_size: grid.len(),
                level_indices,
                support,
                measure: ChatteringMeasure::new(support_weights, i)?,
                h_value,
                running_cost,
            };
            let point = TrajectoryPoint {
                t,
                x: x.clone(),
                p: p.clone(),
                control: Some(control),
            };
            Ok((point, next_x, next_p))
        };
        let (point, next_x, next_p) = interval().map_err(|e| e.at_interval(i))?;
        cost += point.control.as_ref().map_or(0.0, |c| c.running_cost) * dt;
        clamp_count += next_x.clamped;
        points.push(point);
        x = next_x.state;
        p = next_p;
    }

    cost += problem.terminal_cost(&x).map_err(|e| e.at_interval(partition.intervals()))?;
    points.push(TrajectoryPoint {
        t: partition.horizon(),
        x,
        p,
        control: None,
    });
    Ok(Trajectory {
        points,
        accumulated_cost: cost,
        clamp_count,
    })
}

/// Re-simulates from `p0` with every interval's chattering measure frozen at
/// the one chosen in `reference`; no grids are generated and no LP is solved.
pub fn propagate_frozen(
    problem: &ControlProblem,
    partition: &TimePartition,
    p0: &[f64],
    reference: &Trajectory,
    settings: &PropagationSettings,
) -> Result<Trajectory> {
    let n = problem.state_dim();
    if p0.len() != n {
        return Err(ChatterError::DimensionMismatch {
            what: "initial costate",
            expected: n,
            found: p0.len(),
        });
    }
    if reference.intervals() != partition.intervals() {
        return Err(ChatterError::DimensionMismatch {
            what: "reference trajectory intervals",
            expected: partition.intervals(),
            found: reference.intervals(),
        });
    }
    let mut x = problem.initial_state().to_vec();
    let mut p = p0.to_vec();
    let mut points = Vec::with_capacity(partition.intervals() + 1);
    let mut cost = 0.0;
    let mut clamp_count = 0;
    let mut f_buf = vec![0.0; n];

    for (i, ((&t, &dt), frozen)) in partition.times().iter().zip(partition.deltas()).zip(&reference.points).enumerate() {
        let mut interval = || -> Result<(TrajectoryPoint, StateStep, Vec<f64>)> {
            let control = frozen
                .control
                .as_ref()
                .ok_or(ChatterError::Config(format!("reference trajectory has no control on interval {i}")))?;
            let ctx = HamiltonianContext::new(t, &x, &p);
            let mut h_value = 0.0;
            for (w, level) in control.measure.weights().iter().zip(control.support.levels()) {
                h_value += w * model::hamiltonian_with(problem, &ctx, level, &mut f_buf)?;
            }
            let running_cost = problem.running_cost(t, &x, &control.u)?;
            let next_x = step_state(problem, &ctx, &control.support, &control.measure, dt)?;
            let next_p = step_costate(problem, &ctx, &control.support, &control.measure, dt, settings.fd_step)?;
            let point = TrajectoryPoint {
                t,
                x: x.clone(),
                p: p.clone(),
                control: Some(IntervalControl {
                    h_value,
                    running_cost,
                    ..control.clone()
                }),
            };
            Ok((point, next_x, next_p))
        };
        let (point, next_x, next_p) = interval().map_err(|e| e.at_interval(i))?;
        cost += point.control.as_ref().map_or(0.0, |c| c.running_cost) * dt;
        clamp_count += next_x.clamped;
        points.push(point);
        x = next_x.state;
        p = next_p;
    }

    cost += problem.terminal_cost(&x).map_err(|e| e.at_interval(partition.intervals()))?;
    points.push(TrajectoryPoint {
        t: partition.horizon(),
        x,
        p,
        control: None,
    });
    Ok(Trajectory {
        points,
        accumulated_cost: cost,
        clamp_count,
    })
}

/// Recomputes `Σ g(t_i, x_i, u_i) Δ_i + Ψ(x_T)` from the stored points.
pub fn accumulate_cost(problem: &ControlProblem, trajectory: &Trajectory) -> Result<f64> {
    let mut cost = 0.0;
    for pair in trajectory.points.windows(2) {
        let (here, next) = (&pair[0], &pair[1]);
        if let Some(control) = &here.control {
            cost += problem.running_cost(here.t, &here.x, &control.u)? * (next.t - here.t);
        }
    }
    Ok(cost + problem.terminal_cost(&trajectory.terminal().x)?)
}
