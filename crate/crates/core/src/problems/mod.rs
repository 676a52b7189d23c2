//! Built-in benchmark problems.

pub mod demand;
pub mod lqr;
pub mod supply_chain;
pub mod tables;

pub use demand::{synthetic_demand, DemandModel, DemandProfile};
pub use lqr::{build_lqr, build_lqr_with_bounds, lqr_analytic_solution, LqrSolution};
pub use supply_chain::{build_supply_chain, build_supply_chain_with, market_step_oracle, FixedCostMode, SupplyChainOptions};
