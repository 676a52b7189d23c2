//! Scalar linear-quadratic benchmark: minimize `∫₀¹ x² + u² dt` subject to
//! `ẋ = x + u`, `x(0) = 10`.

use std::f64::consts::SQRT_2;

use crate::error::Result;
use crate::model::ControlProblem;

pub const LQR_INITIAL_STATE: f64 = 10.0;
pub const LQR_HORIZON: f64 = 1.0;
/// Default admissible controls; contains the optimal `u*(t) ∈ [−16.9, 0]`.
pub const LQR_CONTROL_BOUNDS: (f64, f64) = (-30.0, 5.0);

pub fn build_lqr() -> ControlProblem {
    build_lqr_with_bounds(LQR_CONTROL_BOUNDS.0, LQR_CONTROL_BOUNDS.1).expect("default bounds are valid")
}

pub fn build_lqr_with_bounds(lower: f64, upper: f64) -> Result<ControlProblem> {
    ControlProblem::builder(
        1,
        1,
        |_, x, u| x[0] * x[0] + u[0] * u[0],
        |_, x, u, out| out[0] = x[0] + u[0],
    )
    .name("lqr")
    .horizon(LQR_HORIZON)
    .initial_state(vec![LQR_INITIAL_STATE])
    .control_bounds(vec![lower], vec![upper])
    .hamiltonian_x_gradient(|_, x, p, _, out| out[0] = 2.0 * x[0] + p[0])
    .build()
}

/// Optimal state, costate, control and cost at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrSolution {
    pub x: f64,
    pub p: f64,
    pub u: f64,
    /// Optimal total cost `J*` (independent of `t`).
    pub j_star: f64,
}

/// Flow of `d/dt [x, p] = A [x, p]` with `A = [[1, −½], [−2, −1]]`.
///
/// `A² = 2I`, so `exp(At) = cosh(√2 t) I + sinh(√2 t)/√2 · A`.
fn flow(t: f64) -> [[f64; 2]; 2] {
    let c = (SQRT_2 * t).cosh();
    let s = (SQRT_2 * t).sinh() / SQRT_2;
    [[c + s, -0.5 * s], [-2.0 * s, c - s]]
}

/// Initial costate solving `p(1) = 0`.
pub fn lqr_optimal_initial_costate() -> f64 {
    let phi = flow(LQR_HORIZON);
    -phi[1][0] * LQR_INITIAL_STATE / phi[1][1]
}

/// Closed-form solution of the optimality system `ẋ = x − p/2`,
/// `ṗ = −2x − p`, `x(0) = 10`, `p(1) = 0`, with `u* = −p/2`.
pub fn lqr_analytic_solution(t: f64) -> LqrSolution {
    let p0 = lqr_optimal_initial_costate();
    let phi = flow(t);
    let x = phi[0][0] * LQR_INITIAL_STATE + phi[0][1] * p0;
    let p = phi[1][0] * LQR_INITIAL_STATE + phi[1][1] * p0;
    LqrSolution {
        x,
        p,
        u: -0.5 * p,
        // Value function V = s(t) x² with p = ∂V/∂x, so J* = x₀ p₀ / 2.
        j_star: 0.5 * LQR_INITIAL_STATE * p0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_hamiltonian, terminal_costate, HamiltonianContext};

    #[test]
    fn problem_examples() {
        let problem = build_lqr();
        let h = eval_hamiltonian(&problem, &HamiltonianContext::new(0.0, &[10.0], &[0.0]), &[0.0]).unwrap();
        assert_eq!(h, 100.0);
        assert_eq!(problem.dynamics(0.0, &[1.0], &[-1.0]).unwrap(), vec![0.0]);
        assert_eq!(terminal_costate(&problem, &[12.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn boundary_conditions() {
        assert_eq!(lqr_analytic_solution(0.0).x, 10.0);
        assert!(lqr_analytic_solution(1.0).p.abs() < 1e-12);
    }

    #[test]
    fn stationarity_holds() {
        for k in 0..=20 {
            let s = lqr_analytic_solution(k as f64 / 20.0);
            assert!((2.0 * s.u + s.p).abs() < 1e-12);
            assert!(s.u >= LQR_CONTROL_BOUNDS.0 && s.u <= LQR_CONTROL_BOUNDS.1);
        }
    }
}
