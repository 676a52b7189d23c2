//! Food distribution benchmark: 14 suppliers, one warehouse, 3 customers,
//! 5 perishable items.
//!
//! State layout (`n = 20`): inventories `X⁰..X⁴`, then unmet demand `Z`
//! item-major (`Z` of customer `i`, item `j` at `5 + 3j + i`).
//! Control layout (`m = 29`): order rates `μ` in supplier-table row order,
//! then deliveries `v` item-major (`v` of customer `i`, item `j` at
//! `14 + 3j + i`).
//!
//! Dynamics: `Ż = −Z + Θ − v` and `Ẋʲ = −Xʲ + Σₖ sₖʲ + μ̂ʲ − Σᵢ vᵢʲ`.
//! Running cost is `J·|J|` with
//! `J = −Σ vᵢʲ rᵢʲ + Σ (αʲ μ̂ʲ + βʲ·χʲ) + Σ γʲ Xʲ + Σ w̄ᵢʲ Zᵢʲ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ChatterError, Result};
use crate::model::{ControlKind, ControlProblem};
use crate::problems::demand::DemandModel;
use crate::problems::tables::{self, CUSTOMER_COUNT, ITEM_COUNT, SUPPLIER_COUNT};

pub const STATE_DIM: usize = ITEM_COUNT + CUSTOMER_COUNT * ITEM_COUNT;
pub const CONTROL_DIM: usize = SUPPLIER_COUNT + CUSTOMER_COUNT * ITEM_COUNT;
pub const DEFAULT_HORIZON: f64 = 5.0;
pub const DEFAULT_DELIVERY_MAX: f64 = 20.0;
pub const DEFAULT_INITIAL_INVENTORY: f64 = 10.0;

pub fn inventory_index(item: usize) -> usize {
    item
}

pub fn unmet_index(customer: usize, item: usize) -> usize {
    ITEM_COUNT + CUSTOMER_COUNT * item + customer
}

pub fn order_index(supplier_row: usize) -> usize {
    supplier_row
}

pub fn delivery_index(customer: usize, item: usize) -> usize {
    SUPPLIER_COUNT + CUSTOMER_COUNT * item + customer
}

/// When the envelope fixed ordering cost `βʲ` is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FixedCostMode {
    /// Every instant, as the cost formula is printed.
    Always,
    /// Only while item `j` is being ordered (`μ̂ʲ > 0`).
    #[default]
    OnOrder,
}

impl fmt::Display for FixedCostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixedCostMode::Always => "always",
            FixedCostMode::OnOrder => "on-order",
        })
    }
}

pub type SupplyRateFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;
pub type RevenueFn = Arc<dyn Fn(f64, usize, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SupplyChainOptions {
    pub fixed_cost_mode: FixedCostMode,
    /// Default unit revenue is `revenue_factor · αʲ`.
    pub revenue_factor: f64,
    /// Overrides the default revenue `r(t, customer, item)`.
    pub revenue: Option<RevenueFn>,
    /// In-transit supply `s(t, supplier_row)`; zero when `None`.
    pub supply_rate: Option<SupplyRateFn>,
    pub delivery_max: f64,
    pub initial_inventory: [f64; ITEM_COUNT],
    pub initial_unmet: f64,
}

impl Default for SupplyChainOptions {
    fn default() -> Self {
        SupplyChainOptions {
            fixed_cost_mode: FixedCostMode::OnOrder,
            revenue_factor: 2.0,
            revenue: None,
            supply_rate: None,
            delivery_max: DEFAULT_DELIVERY_MAX,
            initial_inventory: [DEFAULT_INITIAL_INVENTORY; ITEM_COUNT],
            initial_unmet: 0.0,
        }
    }
}

impl fmt::Debug for SupplyChainOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SupplyChainOptions")
            .field("fixed_cost_mode", &self.fixed_cost_mode)
            .field("revenue_factor", &self.revenue_factor)
            .field("delivery_max", &self.delivery_max)
            .field("initial_inventory", &self.initial_inventory)
            .field("initial_unmet", &self.initial_unmet)
            .finish_non_exhaustive()
    }
}

/// Constants derived from the tables, shared by the evaluators.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyChainData {
    pub carry_cost: [f64; ITEM_COUNT],
    /// `αʲ = Σₖ αₖʲ`.
    pub envelope_unit_cost: [f64; ITEM_COUNT],
    /// `βʲ = Σₖ βₖʲ`.
    pub envelope_fixed_cost: [f64; ITEM_COUNT],
    /// `w̄ᵢʲ = wᵢ δʲ / Σ wᵢ δʲ`, indexed `[customer][item]`.
    pub unmet_weight: [[f64; ITEM_COUNT]; CUSTOMER_COUNT],
    /// Item of each supplier-table row.
    pub supplier_item: [usize; SUPPLIER_COUNT],
}

impl SupplyChainData {
    pub fn from_tables() -> Self {
        let items = tables::items();
        let customers = tables::customers();
        let suppliers = tables::suppliers();
        let mut data = SupplyChainData {
            carry_cost: [0.0; ITEM_COUNT],
            envelope_unit_cost: [0.0; ITEM_COUNT],
            envelope_fixed_cost: [0.0; ITEM_COUNT],
            unmet_weight: [[0.0; ITEM_COUNT]; CUSTOMER_COUNT],
            supplier_item: [0; SUPPLIER_COUNT],
        };
        for item in &items {
            data.carry_cost[item.item_id] = item.inv_carry_cost;
        }
        for (row, s) in suppliers.iter().enumerate() {
            data.envelope_unit_cost[s.item_id] += s.unit_cost;
            data.envelope_fixed_cost[s.item_id] += s.fixed_cost;
            data.supplier_item[row] = s.item_id;
        }
        let total: f64 = customers
            .iter()
            .flat_map(|c| items.iter().map(move |it| c.importance * it.penalty))
            .sum();
        for (i, c) in customers.iter().enumerate() {
            for it in &items {
                data.unmet_weight[i][it.item_id] = c.importance * it.penalty / total;
            }
        }
        data
    }

    /// Total order rate `μ̂ʲ` per item.
    pub fn order_totals(&self, u: &[f64]) -> [f64; ITEM_COUNT] {
        let mut totals = [0.0; ITEM_COUNT];
        for (row, &item) in self.supplier_item.iter().enumerate() {
            totals[item] += u[order_index(row)];
        }
        totals
    }
}

/// Shared evaluator state.
struct Model {
    data: SupplyChainData,
    demand: DemandModel,
    options: SupplyChainOptions,
}

/// Time-dependent inputs evaluated once per time instant.
#[derive(Clone, Copy)]
struct Rates {
    theta: [[f64; ITEM_COUNT]; CUSTOMER_COUNT],
    revenue: [[f64; ITEM_COUNT]; CUSTOMER_COUNT],
    supply: [f64; ITEM_COUNT],
}

thread_local! {
    // Keyed by model address and time bits; the grid sweep hits the same `t`
    // thousands of times in a row.
    static RATES: std::cell::Cell<Option<(usize, u64, Rates)>> = const { std::cell::Cell::new(None) };
}

impl Model {
    fn rates(&self, t: f64) -> Rates {
        let key = (self as *const Model as usize, t.to_bits());
        if let Some((addr, bits, rates)) = RATES.with(|c| c.get()) {
            if (addr, bits) == key {
                return rates;
            }
        }
        let mut rates = Rates {
            theta: [[0.0; ITEM_COUNT]; CUSTOMER_COUNT],
            revenue: [[0.0; ITEM_COUNT]; CUSTOMER_COUNT],
            supply: [0.0; ITEM_COUNT],
        };
        for customer in 0..CUSTOMER_COUNT {
            for item in 0..ITEM_COUNT {
                rates.theta[customer][item] = self.demand.theta(t, customer, item);
                rates.revenue[customer][item] = match &self.options.revenue {
                    Some(r) => r(t, customer, item),
                    None => self.options.revenue_factor * self.data.envelope_unit_cost[item],
                };
            }
        }
        if let Some(s) = &self.options.supply_rate {
            for (row, &item) in self.data.supplier_item.iter().enumerate() {
                rates.supply[item] += s(t, row);
            }
        }
        RATES.with(|c| c.set(Some((key.0, key.1, rates))));
        rates
    }

    /// Instantaneous incremental cost `J(t)`.
    fn incremental_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let orders = self.data.order_totals(u);
        let rates = self.rates(t);
        let mut j = 0.0;
        for item in 0..ITEM_COUNT {
            for customer in 0..CUSTOMER_COUNT {
                j -= u[delivery_index(customer, item)] * rates.revenue[customer][item];
                j += self.data.unmet_weight[customer][item] * x[unmet_index(customer, item)];
            }
            let charged = match self.options.fixed_cost_mode {
                FixedCostMode::Always => true,
                FixedCostMode::OnOrder => orders[item] > 0.0,
            };
            j += self.data.envelope_unit_cost[item] * orders[item];
            if charged {
                j += self.data.envelope_fixed_cost[item];
            }
            j += self.data.carry_cost[item] * x[inventory_index(item)];
        }
        j
    }

    fn dynamics(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let orders = self.data.order_totals(u);
        let rates = self.rates(t);
        for item in 0..ITEM_COUNT {
            let mut delivered = 0.0;
            for customer in 0..CUSTOMER_COUNT {
                let v = u[delivery_index(customer, item)];
                delivered += v;
                let z = unmet_index(customer, item);
                out[z] = -x[z] + rates.theta[customer][item] - v;
            }
            let xi = inventory_index(item);
            out[xi] = -x[xi] + rates.supply[item] + orders[item] - delivered;
        }
    }

    fn state_gradient(&self, t: f64, x: &[f64], p: &[f64], u: &[f64], out: &mut [f64]) {
        let scale = 2.0 * self.incremental_cost(t, x, u).abs();
        for item in 0..ITEM_COUNT {
            let xi = inventory_index(item);
            out[xi] = scale * self.data.carry_cost[item] - p[xi];
            for customer in 0..CUSTOMER_COUNT {
                let z = unmet_index(customer, item);
                out[z] = scale * self.data.unmet_weight[customer][item] - p[z];
            }
        }
    }
}

pub fn build_supply_chain(demand: &DemandModel, horizon: f64, intervals: usize) -> Result<ControlProblem> {
    build_supply_chain_with(demand, horizon, intervals, SupplyChainOptions::default())
}

pub fn build_supply_chain_with(
    demand: &DemandModel,
    horizon: f64,
    intervals: usize,
    options: SupplyChainOptions,
) -> Result<ControlProblem> {
    if intervals == 0 {
        return Err(ChatterError::Config("the supply chain needs at least one interval".into()));
    }
    if !(options.delivery_max.is_finite() && options.delivery_max >= 0.0) {
        return Err(ChatterError::Config(format!("delivery maximum must be non-negative, got {}", options.delivery_max)));
    }
    if options.initial_inventory.iter().chain([&options.initial_unmet]).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ChatterError::Config("initial inventory and unmet demand must be non-negative".into()));
    }
    let suppliers = tables::suppliers();
    if suppliers.len() != SUPPLIER_COUNT {
        return Err(ChatterError::DimensionMismatch {
            what: "supplier table",
            expected: SUPPLIER_COUNT,
            found: suppliers.len(),
        });
    }

    let mut lower = vec![0.0; CONTROL_DIM];
    let mut upper = vec![options.delivery_max; CONTROL_DIM];
    let mut kinds = vec![ControlKind::Continuous; CONTROL_DIM];
    for (row, s) in suppliers.iter().enumerate() {
        lower[order_index(row)] = 0.0;
        upper[order_index(row)] = s.max_qty;
        kinds[order_index(row)] = ControlKind::SemiContinuous { on_min: s.min_qty };
    }
    let mut x0 = vec![options.initial_unmet; STATE_DIM];
    x0[..ITEM_COUNT].copy_from_slice(&options.initial_inventory);

    let model = Arc::new(Model {
        data: SupplyChainData::from_tables(),
        demand: demand.clone(),
        options,
    });
    let cost_model = Arc::clone(&model);
    let dyn_model = Arc::clone(&model);
    let grad_model = Arc::clone(&model);

    ControlProblem::builder(
        STATE_DIM,
        CONTROL_DIM,
        move |t, x, u| {
            let j = cost_model.incremental_cost(t, x, u);
            j * j.abs()
        },
        move |t, x, u, out| dyn_model.dynamics(t, x, u, out),
    )
    .name("supply-chain")
    .horizon(horizon)
    .initial_state(x0)
    .control_bounds(lower, upper)
    .control_kinds(kinds)
    .state_bounds(Some(vec![0.0; STATE_DIM]), None)
    .hamiltonian_x_gradient(move |t, x, p, u, out| grad_model.state_gradient(t, x, p, u, out))
    .build()
}

/// One explicit Euler step of a single market-conservation row.
pub fn market_step_oracle(unmet: f64, theta: f64, delivery: f64, dt: f64) -> f64 {
    unmet + dt * (-unmet + theta - delivery)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{grad_h_costate, HamiltonianContext};
    use crate::problems::demand::{synthetic_demand, DemandProfile};

    fn zero_demand() -> DemandModel {
        synthetic_demand(DemandProfile::Constant, 0.0, 1.0).unwrap()
    }

    #[test]
    fn dimensions_and_layout() {
        let problem = build_supply_chain(&zero_demand(), 5.0, 10).unwrap();
        assert_eq!(problem.state_dim(), 20);
        assert_eq!(problem.control_dim(), 29);
        assert_eq!(unmet_index(2, 4), 19);
        assert_eq!(delivery_index(2, 4), 28);
        assert_eq!(problem.control_upper()[0], 14.0);
        assert_eq!(problem.control_kinds()[0], ControlKind::SemiContinuous { on_min: 7.0 });
        assert_eq!(problem.state_lower().unwrap(), vec![0.0; 20].as_slice());
    }

    #[test]
    fn market_row_dynamics() {
        let demand = synthetic_demand(DemandProfile::Constant, 2.0, 1.0).unwrap();
        let problem = build_supply_chain(&demand, 5.0, 10).unwrap();
        let mut x = vec![0.0; STATE_DIM];
        let mut u = vec![0.0; CONTROL_DIM];
        x[unmet_index(1, 2)] = 5.0;
        u[delivery_index(1, 2)] = 1.0;
        let p = vec![0.0; STATE_DIM];
        let f = grad_h_costate(&problem, &HamiltonianContext::new(0.0, &x, &p), &u).unwrap();
        assert_eq!(f[unmet_index(1, 2)], -4.0);
        assert_eq!(market_step_oracle(5.0, 2.0, 1.0, 1.0), 1.0);
        assert_eq!(market_step_oracle(0.0, 0.0, 0.0, 0.3), 0.0);
    }

    #[test]
    fn unmet_weight_normalization() {
        let data = SupplyChainData::from_tables();
        let total = (1.0 + 0.4 + 0.25) * (10.0 + 25.0 + 39.0 + 30.0 + 25.0);
        assert!((data.unmet_weight[0][2] - 1.0 * 39.0 / total).abs() < 1e-15);
        let sum: f64 = data.unmet_weight.iter().flatten().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(data.envelope_fixed_cost, [17.0, 15.0, 60.0, 85.0, 45.0]);
        assert_eq!(data.envelope_unit_cost, [45.0, 120.0, 65.0, 66.0, 75.0]);
    }

    #[test]
    fn zero_everything_costs_nothing() {
        let problem = build_supply_chain_with(
            &zero_demand(),
            5.0,
            10,
            SupplyChainOptions {
                initial_inventory: [0.0; ITEM_COUNT],
                ..Default::default()
            },
        )
        .unwrap();
        let x = vec![0.0; STATE_DIM];
        let u = vec![0.0; CONTROL_DIM];
        assert_eq!(problem.running_cost(0.0, &x, &u).unwrap(), 0.0);
    }

    #[test]
    fn fixed_cost_modes() {
        let x = vec![0.0; STATE_DIM];
        let u = vec![0.0; CONTROL_DIM];
        let always = build_supply_chain_with(
            &zero_demand(),
            5.0,
            10,
            SupplyChainOptions {
                fixed_cost_mode: FixedCostMode::Always,
                ..Default::default()
            },
        )
        .unwrap();
        // J = Σβ = 222 with nothing ordered.
        assert_eq!(always.running_cost(0.0, &x, &u).unwrap(), 222.0 * 222.0);

        let on_order = build_supply_chain(&zero_demand(), 5.0, 10).unwrap();
        let mut u = u;
        u[order_index(0)] = 7.0;
        // J = 45 · 7 + 17
        assert_eq!(on_order.running_cost(0.0, &x, &u).unwrap(), 332.0 * 332.0);
    }

    #[test]
    fn cost_sign_follows_incremental_cost() {
        let problem = build_supply_chain(&zero_demand(), 5.0, 10).unwrap();
        let x = vec![0.0; STATE_DIM];
        let mut u = vec![0.0; CONTROL_DIM];
        u[delivery_index(0, 0)] = 1.0;
        // J = −2 · 45 = −90 → g = −8100
        assert_eq!(problem.running_cost(0.0, &x, &u).unwrap(), -8100.0);
    }

    #[test]
    fn rejects_bad_options() {
        assert!(build_supply_chain(&zero_demand(), 5.0, 0).is_err());
        assert!(build_supply_chain(&zero_demand(), -1.0, 10).is_err());
        let bad = SupplyChainOptions {
            initial_unmet: -1.0,
            ..Default::default()
        };
        assert!(build_supply_chain_with(&zero_demand(), 5.0, 10, bad).is_err());
    }
}
