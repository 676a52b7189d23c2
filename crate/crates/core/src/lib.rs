//! Near-optimal Hamiltonian control via chattering.
//!
//! A continuous optimal control problem is split over a time partition. On
//! each interval the control is relaxed to a chattering measure over a grid
//! of constant levels and chosen by a closed-form relaxed-knapsack LP on the
//! Hamiltonian. State and costate are stepped forward with the same measure,
//! and the unknown initial costate is found by variation-of-extremals
//! shooting.
//!
//! ```no_run
//! use chatter_core::{problems, propagation::{PropagationSettings, TimePartition}, shooting};
//!
//! let problem = problems::build_lqr();
//! let partition = TimePartition::uniform(problem.horizon(), 100).unwrap();
//! let result = shooting::solve(
//!     &problem,
//!     &partition,
//!     &shooting::ShootingConfig::default(),
//!     &PropagationSettings::default(),
//! )
//! .unwrap();
//! assert!(result.converged);
//! ```

pub mod chattering;
pub mod cli;
pub mod error;
pub mod model;
pub mod problems;
pub mod propagation;
pub mod shooting;
pub mod validation;

pub use chattering::{ChatteringMeasure, ChatteringSignal, GridParams, LevelGrid};
pub use error::{ChatterError, Result};
pub use model::{ControlKind, ControlProblem, FdStep, HamiltonianContext};
pub use propagation::{PropagationSettings, TimePartition, Trajectory, TrajectoryPoint};
pub use shooting::{ShootingConfig, ShootingResult};
