//! Optimal control problem definition and Hamiltonian evaluations.
//!
//! A [`ControlProblem`] bundles the running cost `g(t, x, u)`, the dynamics
//! `f(t, x, u)`, an optional terminal cost `Ψ(x)` and the admissible control
//! box. The Hamiltonian is `H(t, x, p, u) = g(t, x, u) + pᵀ f(t, x, u)`.
//!
//! Evaluators must be deterministic and reentrant: the solver calls them in
//! arbitrary order, possibly from several threads at once.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{ChatterError, Result};

pub type RunningCostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// Writes `f(t, x, u)` into the output slice (length `n`).
pub type DynamicsFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TerminalGradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type TerminalHessianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// Writes `∂H/∂x (t, x, p, u)` into the output slice (length `n`).
pub type HamiltonianStateGradientFn =
    Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// How the chattering levels of one control dimension are laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlKind {
    /// Levels span `[lower, upper]`.
    Continuous,
    /// Either exactly `lower` (off) or a value in `[on_min, upper]`.
    SemiContinuous { on_min: f64 },
}

/// Central finite-difference step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    Absolute(f64),
    /// `h_j = r · max(1, |x_j|)`.
    Relative(f64),
}

impl FdStep {
    pub fn step_for(&self, value: f64) -> f64 {
        match *self {
            FdStep::Absolute(h) => h,
            FdStep::Relative(r) => r * value.abs().max(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let h = match *self {
            FdStep::Absolute(h) | FdStep::Relative(h) => h,
        };
        if h.is_finite() && h > 0.0 {
            Ok(())
        } else {
            Err(ChatterError::Config(format!("finite-difference step must be positive, got {h}")))
        }
    }
}

impl Default for FdStep {
    fn default() -> Self {
        FdStep::Relative(1e-6)
    }
}

#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    state_dim: usize,
    control_dim: usize,
    horizon: f64,
    initial_state: Vec<f64>,
    running_cost: RunningCostFn,
    dynamics: DynamicsFn,
    terminal_cost: Option<TerminalCostFn>,
    terminal_gradient: Option<TerminalGradientFn>,
    terminal_hessian: Option<TerminalHessianFn>,
    hamiltonian_x_gradient: Option<HamiltonianStateGradientFn>,
    control_lower: Vec<f64>,
    control_upper: Vec<f64>,
    control_kinds: Vec<ControlKind>,
    state_lower: Option<Vec<f64>>,
    state_upper: Option<Vec<f64>>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .field("has_terminal_cost", &self.terminal_cost.is_some())
            .field("has_hamiltonian_x_gradient", &self.hamiltonian_x_gradient.is_some())
            .field("control_lower", &self.control_lower)
            .field("control_upper", &self.control_upper)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    pub fn builder(
        state_dim: usize,
        control_dim: usize,
        running_cost: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        dynamics: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> ControlProblemBuilder {
        ControlProblemBuilder {
            name: String::from("custom"),
            state_dim,
            control_dim,
            horizon: 1.0,
            initial_state: vec![0.0; state_dim],
            running_cost: Arc::new(running_cost),
            dynamics: Arc::new(dynamics),
            terminal_cost: None,
            terminal_gradient: None,
            terminal_hessian: None,
            hamiltonian_x_gradient: None,
            control_lower: vec![-1.0; control_dim],
            control_upper: vec![1.0; control_dim],
            control_kinds: vec![ControlKind::Continuous; control_dim],
            state_lower: None,
            state_upper: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn control_dim(&self) -> usize {
        self.control_dim
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }
    pub fn control_lower(&self) -> &[f64] {
        &self.control_lower
    }
    pub fn control_upper(&self) -> &[f64] {
        &self.control_upper
    }
    pub fn control_kinds(&self) -> &[ControlKind] {
        &self.control_kinds
    }
    pub fn state_lower(&self) -> Option<&[f64]> {
        self.state_lower.as_deref()
    }
    pub fn state_upper(&self) -> Option<&[f64]> {
        self.state_upper.as_deref()
    }
    pub fn has_state_bounds(&self) -> bool {
        self.state_lower.is_some() || self.state_upper.is_some()
    }
    pub fn has_terminal_cost(&self) -> bool {
        self.terminal_cost.is_some()
    }
    pub fn has_analytic_state_gradient(&self) -> bool {
        self.hamiltonian_x_gradient.is_some()
    }

    /// `g(t, x, u)`, rejecting non-finite results.
    pub fn running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
        let g = (self.running_cost)(t, x, u);
        if g.is_finite() {
            Ok(g)
        } else {
            Err(ChatterError::NonFiniteEvaluation { what: "running cost", t })
        }
    }

    /// `f(t, x, u)` written into `out`, rejecting non-finite results.
    pub fn dynamics_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        (self.dynamics)(t, x, u, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ChatterError::NonFiniteEvaluation { what: "dynamics", t })
        }
    }

    pub fn dynamics(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim];
        self.dynamics_into(t, x, u, &mut out)?;
        Ok(out)
    }

    /// `Ψ(x)`; zero when the problem has no terminal cost.
    pub fn terminal_cost(&self, x: &[f64]) -> Result<f64> {
        match &self.terminal_cost {
            None => Ok(0.0),
            Some(psi) => {
                let v = psi(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ChatterError::NonFiniteEvaluation { what: "terminal cost", t: self.horizon })
                }
            }
        }
    }
}

pub struct ControlProblemBuilder {
    name: String,
    state_dim: usize,
    control_dim: usize,
    horizon: f64,
    initial_state: Vec<f64>,
    running_cost: RunningCostFn,
    dynamics: DynamicsFn,
    terminal_cost: Option<TerminalCostFn>,
    terminal_gradient: Option<TerminalGradientFn>,
    terminal_hessian: Option<TerminalHessianFn>,
    hamiltonian_x_gradient: Option<HamiltonianStateGradientFn>,
    control_lower: Vec<f64>,
    control_upper: Vec<f64>,
    control_kinds: Vec<ControlKind>,
    state_lower: Option<Vec<f64>>,
    state_upper: Option<Vec<f64>>,
}

impl ControlProblemBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = x0;
        self
    }

    pub fn control_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.control_lower = lower;
        self.control_upper = upper;
        self
    }

    pub fn control_kinds(mut self, kinds: Vec<ControlKind>) -> Self {
        self.control_kinds = kinds;
        self
    }

    /// Entries may be infinite to leave a component unbounded.
    pub fn state_bounds(mut self, lower: Option<Vec<f64>>, upper: Option<Vec<f64>>) -> Self {
        self.state_lower = lower;
        self.state_upper = upper;
        self
    }

    pub fn terminal_cost(mut self, psi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal_cost = Some(Arc::new(psi));
        self
    }

    pub fn terminal_gradient(mut self, grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.terminal_gradient = Some(Arc::new(grad));
        self
    }

    pub fn terminal_hessian(mut self, hess: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.terminal_hessian = Some(Arc::new(hess));
        self
    }

    pub fn hamiltonian_x_gradient(
        mut self,
        grad: impl Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.hamiltonian_x_gradient = Some(Arc::new(grad));
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        let n = self.state_dim;
        let m = self.control_dim;
        if n == 0 || m == 0 {
            return Err(ChatterError::Config(format!(
                "state and control dimensions must be positive (got n = {n}, m = {m})"
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ChatterError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        check_len("initial state", n, self.initial_state.len())?;
        check_len("control lower bound", m, self.control_lower.len())?;
        check_len("control upper bound", m, self.control_upper.len())?;
        check_len("control kinds", m, self.control_kinds.len())?;
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(ChatterError::Config("initial state must be finite".into()));
        }
        for j in 0..m {
            let (lo, hi) = (self.control_lower[j], self.control_upper[j]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ChatterError::Config(format!(
                    "control bounds for dimension {j} must be finite with lower <= upper (got [{lo}, {hi}])"
                )));
            }
            if let ControlKind::SemiContinuous { on_min } = self.control_kinds[j] {
                if !(on_min >= lo && on_min <= hi) {
                    return Err(ChatterError::Config(format!(
                        "on-minimum {on_min} of dimension {j} lies outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        if let Some(lower) = &self.state_lower {
            check_len("state lower bound", n, lower.len())?;
        }
        if let Some(upper) = &self.state_upper {
            check_len("state upper bound", n, upper.len())?;
        }
        for j in 0..n {
            let x = self.initial_state[j];
            let lo = self.state_lower.as_ref().map_or(f64::NEG_INFINITY, |b| b[j]);
            let hi = self.state_upper.as_ref().map_or(f64::INFINITY, |b| b[j]);
            if lo.is_nan() || hi.is_nan() || !(lo <= x && x <= hi) {
                return Err(ChatterError::Config(format!(
                    "initial state component {j} = {x} violates state bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(ControlProblem {
            name: self.name,
            state_dim: n,
            control_dim: m,
            horizon: self.horizon,
            initial_state: self.initial_state,
            running_cost: self.running_cost,
            dynamics: self.dynamics,
            terminal_cost: self.terminal_cost,
            terminal_gradient: self.terminal_gradient,
            terminal_hessian: self.terminal_hessian,
            hamiltonian_x_gradient: self.hamiltonian_x_gradient,
            control_lower: self.control_lower,
            control_upper: self.control_upper,
            control_kinds: self.control_kinds,
            state_lower: self.state_lower,
            state_upper: self.state_upper,
        })
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(ChatterError::DimensionMismatch { what, expected, found })
    }
}

/// The `(t, x, p)` arguments of `H(t, x, p, u)`.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianContext<'a> {
    pub time: f64,
    pub state: &'a [f64],
    pub costate: &'a [f64],
}

impl<'a> HamiltonianContext<'a> {
    pub fn new(time: f64, state: &'a [f64], costate: &'a [f64]) -> Self {
        HamiltonianContext { time, state, costate }
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
            && self.state.iter().all(|v| v.is_finite())
            && self.costate.iter().all(|v| v.is_finite())
    }
}

fn within_bounds(problem: &ControlProblem, u: &[f64]) -> bool {
    u.iter()
        .zip(problem.control_lower.iter().zip(&problem.control_upper))
        .all(|(&v, (&lo, &hi))| v >= lo - 1e-12 && v <= hi + 1e-12)
}

/// Hamiltonian value using a caller-provided scratch buffer for `f`.
pub(crate) fn hamiltonian_with(
    problem: &ControlProblem,
    ctx: &HamiltonianContext<'_>,
    u: &[f64],
    f_buf: &mut [f64],
) -> Result<f64> {
    let g = problem.running_cost(ctx.time, ctx.state, u)?;
    problem.dynamics_into(ctx.time, ctx.state, u, f_buf)?;
    let h = g + ctx.costate.iter().zip(f_buf.iter()).map(|(p, f)| p * f).sum::<f64>();
    if h.is_finite() {
        Ok(h)
    } else {
        Err(ChatterError::NonFiniteEvaluation { what: "Hamiltonian", t: ctx.time })
    }
}

/// `H = g(t, x, u) + pᵀ f(t, x, u)`.
pub fn eval_hamiltonian(problem: &ControlProblem, ctx: &HamiltonianContext<'_>, u: &[f64]) -> Result<f64> {
    debug_assert!(within_bounds(problem, u), "control {u:?} outside bounds");
    let mut f_buf = vec![0.0; problem.state_dim];
    hamiltonian_with(problem, ctx, u, &mut f_buf)
}

/// `∂H/∂p`, which is exactly `f(t, x, u)`.
pub fn grad_h_costate(problem: &ControlProblem, ctx: &HamiltonianContext<'_>, u: &[f64]) -> Result<Vec<f64>> {
    problem.dynamics(ctx.time, ctx.state, u)
}

/// `∂H/∂x`: the analytic evaluator if the problem has one, otherwise a
/// central finite difference of `H` in each state coordinate.
pub fn grad_h_state(
    problem: &ControlProblem,
    ctx: &HamiltonianContext<'_>,
    u: &[f64],
    fd_step: FdStep,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; problem.state_dim];
    grad_h_state_into(problem, ctx, u, fd_step, &mut out)?;
    Ok(out)
}

pub(crate) fn grad_h_state_into(
    problem: &ControlProblem,
    ctx: &HamiltonianContext<'_>,
    u: &[f64],
    fd_step: FdStep,
    out: &mut [f64],
) -> Result<()> {
    if let Some(grad) = &problem.hamiltonian_x_gradient {
        grad(ctx.time, ctx.state, ctx.costate, u, out);
        return if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ChatterError::NonFiniteEvaluation { what: "Hamiltonian state gradient", t: ctx.time })
        };
    }
    fd_step.validate()?;
    let n = problem.state_dim;
    let mut x = ctx.state.to_vec();
    let mut f_buf = vec![0.0; n];
    for j in 0..n {
        let h = fd_step.step_for(ctx.state[j]);
        x[j] = ctx.state[j] + h;
        let plus = hamiltonian_with(problem, &HamiltonianContext::new(ctx.time, &x, ctx.costate), u, &mut f_buf)?;
        x[j] = ctx.state[j] - h;
        let minus = hamiltonian_with(problem, &HamiltonianContext::new(ctx.time, &x, ctx.costate), u, &mut f_buf)?;
        x[j] = ctx.state[j];
        out[j] = (plus - minus) / (2.0 * h);
    }
    Ok(())
}

/// Central difference of the Hamiltonian in `x`, ignoring any analytic
/// gradient the problem carries. Used to cross-check analytic gradients.
pub fn grad_h_state_fd(
    problem: &ControlProblem,
    ctx: &HamiltonianContext<'_>,
    u: &[f64],
    fd_step: FdStep,
) -> Result<Vec<f64>> {
    let stripped = ControlProblem {
        hamiltonian_x_gradient: None,
        ..problem.clone()
    };
    grad_h_state(&stripped, ctx, u, fd_step)
}

/// Transversality target `∂Ψ/∂x` at `x_final`.
pub fn terminal_costate(problem: &ControlProblem, x_final: &[f64]) -> Result<Vec<f64>> {
    let n = problem.state_dim;
    let t = problem.horizon;
    if x_final.iter().any(|v| !v.is_finite()) {
        return Err(ChatterError::NonFiniteEvaluation { what: "terminal state", t });
    }
    let mut out = vec![0.0; n];
    let Some(psi) = &problem.terminal_cost else {
        return Ok(out);
    };
    if let Some(grad) = &problem.terminal_gradient {
        grad(x_final, &mut out);
    } else {
        let step = FdStep::default();
        let mut x = x_final.to_vec();
        for j in 0..n {
            let h = step.step_for(x_final[j]);
            x[j] = x_final[j] + h;
            let plus = psi(&x);
            x[j] = x_final[j] - h;
            let minus = psi(&x);
            x[j] = x_final[j];
            out[j] = (plus - minus) / (2.0 * h);
        }
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(ChatterError::NonFiniteEvaluation { what: "terminal gradient", t })
    }
}

/// `∂²Ψ/∂x²` at `x_final`; exact zeros when there is no terminal cost.
pub fn terminal_hessian(problem: &ControlProblem, x_final: &[f64]) -> Result<DMatrix<f64>> {
    let n = problem.state_dim;
    let t = problem.horizon;
    let Some(psi) = &problem.terminal_cost else {
        return Ok(DMatrix::zeros(n, n));
    };
    let hess = if let Some(hess) = &problem.terminal_hessian {
        hess(x_final)
    } else if let Some(grad) = &problem.terminal_gradient {
        let step = FdStep::Relative(1e-5);
        let mut x = x_final.to_vec();
        let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = step.step_for(x_final[j]);
            x[j] = x_final[j] + h;
            grad(&x, &mut gp);
            x[j] = x_final[j] - h;
            grad(&x, &mut gm);
            x[j] = x_final[j];
            for i in 0..n {
                out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        (&out + out.transpose()) * 0.5
    } else {
        let step = FdStep::Relative(1e-4);
        let mut x = x_final.to_vec();
        let centre = psi(x_final);
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            let hi = step.step_for(x_final[i]);
            x[i] = x_final[i] + hi;
            let plus = psi(&x);
            x[i] = x_final[i] - hi;
            let minus = psi(&x);
            x[i] = x_final[i];
            out[(i, i)] = (plus - 2.0 * centre + minus) / (hi * hi);
            for j in 0..i {
                let hj = step.step_for(x_final[j]);
                let mut corner = |si: f64, sj: f64| {
                    x[i] = x_final[i] + si * hi;
                    x[j] = x_final[j] + sj * hj;
                    let v = psi(&x);
                    x[i] = x_final[i];
                    x[j] = x_final[j];
                    v
                };
                let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                    / (4.0 * hi * hj);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    };
    if hess.shape() != (n, n) {
        return Err(ChatterError::DimensionMismatch {
            what: "terminal Hessian",
            expected: n,
            found: hess.nrows(),
        });
    }
    if hess.iter().all(|v| v.is_finite()) {
        Ok(hess)
    } else {
        Err(ChatterError::NonFiniteEvaluation { what: "terminal Hessian", t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lqr_like() -> ControlProblem {
        ControlProblem::builder(
            1,
            1,
            |_, x, u| x[0] * x[0] + u[0] * u[0],
            |_, x, u, out| out[0] = x[0] + u[0],
        )
        .initial_state(vec![10.0])
        .control_bounds(vec![-30.0], vec![5.0])
        .build()
        .unwrap()
    }

    #[test]
    fn hamiltonian_direct_substitution() {
        let problem = lqr_like();
        let h = eval_hamiltonian(&problem, &HamiltonianContext::new(0.0, &[10.0], &[0.0]), &[0.0]).unwrap();
        assert_eq!(h, 100.0);
        let h = eval_hamiltonian(&problem, &HamiltonianContext::new(0.0, &[1.0], &[2.0]), &[-1.0]).unwrap();
        assert_eq!(h, 2.0);
    }

    #[test]
    fn zero_cost_zero_costate_gives_zero_hamiltonian() {
        let problem = ControlProblem::builder(2, 1, |_, _, _| 0.0, |_, x, u, out| {
            out[0] = x[1] * u[0];
            out[1] = -x[0];
        })
        .build()
        .unwrap();
        let h = eval_hamiltonian(&problem, &HamiltonianContext::new(0.3, &[1.0, 2.0], &[0.0, 0.0]), &[0.5]).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn nan_dynamics_is_reported() {
        let problem = ControlProblem::builder(1, 1, |_, _, _| 0.0, |_, _, _, out| out[0] = f64::NAN)
            .build()
            .unwrap();
        let err = eval_hamiltonian(&problem, &HamiltonianContext::new(0.5, &[0.0], &[1.0]), &[0.0]).unwrap_err();
        assert!(matches!(err, ChatterError::NonFiniteEvaluation { what: "dynamics", .. }));
    }

    #[test]
    fn costate_gradient_is_dynamics() {
        let problem = lqr_like();
        let ctx = HamiltonianContext::new(0.0, &[10.0], &[7.0]);
        assert_eq!(grad_h_costate(&problem, &ctx, &[0.0]).unwrap(), vec![10.0]);
        let ctx = HamiltonianContext::new(0.0, &[3.0], &[7.0]);
        assert_eq!(grad_h_costate(&problem, &ctx, &[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn finite_difference_state_gradient() {
        let problem = lqr_like();
        let ctx = HamiltonianContext::new(0.0, &[10.0], &[1.0]);
        let g = grad_h_state(&problem, &ctx, &[0.0], FdStep::Absolute(1e-5)).unwrap();
        assert!((g[0] - 21.0).abs() < 1e-8, "{g:?}");
        let ctx = HamiltonianContext::new(0.0, &[0.0], &[0.0]);
        let g = grad_h_state(&problem, &ctx, &[0.0], FdStep::default()).unwrap();
        assert!(g[0].abs() < 1e-9);
    }

    #[test]
    fn terminal_costate_conventions() {
        let problem = lqr_like();
        assert_eq!(terminal_costate(&problem, &[4.0]).unwrap(), vec![0.0]);
        assert_eq!(terminal_hessian(&problem, &[4.0]).unwrap(), DMatrix::zeros(1, 1));

        let quad = ControlProblem::builder(2, 1, |_, _, _| 0.0, |_, _, _, out| out.fill(0.0))
            .terminal_cost(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]))
            .build()
            .unwrap();
        let g = terminal_costate(&quad, &[3.0, -2.0]).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-8 && (g[1] + 2.0).abs() < 1e-8);
        let h = terminal_hessian(&quad, &[3.0, -2.0]).unwrap();
        assert!((&h - DMatrix::identity(2, 2)).abs().max() < 1e-5, "{h}");

        let linear = ControlProblem::builder(3, 1, |_, _, _| 0.0, |_, _, _, out| out.fill(0.0))
            .terminal_cost(|x| x.iter().sum())
            .build()
            .unwrap();
        for v in terminal_costate(&linear, &[1.5, -7.0, 100.0]).unwrap() {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn builder_rejects_bad_bounds() {
        let bad = ControlProblem::builder(1, 1, |_, _, _| 0.0, |_, _, _, out| out[0] = 0.0)
            .control_bounds(vec![1.0], vec![-1.0])
            .build();
        assert!(matches!(bad, Err(ChatterError::Config(_))));
        let bad = ControlProblem::builder(1, 1, |_, _, _| 0.0, |_, _, _, out| out[0] = 0.0)
            .initial_state(vec![2.0])
            .state_bounds(Some(vec![0.0]), Some(vec![1.0]))
            .build();
        assert!(matches!(bad, Err(ChatterError::Config(_))));
        let bad = ControlProblem::builder(0, 1, |_, _, _| 0.0, |_, _, _, _| {}).build();
        assert!(bad.is_err());
    }
}
