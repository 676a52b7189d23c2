use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chattering::GridParams;
use crate::error::{ChatterError, Result};
use crate::model::ControlProblem;
use crate::problems::{self, supply_chain, DemandProfile, FixedCostMode, SupplyChainOptions};
use crate::propagation::{PropagationSettings, TimePartition};
use crate::shooting::{PerturbationSize, SensitivityMode, ShootingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Lqr,
    SupplyChain,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Lqr => "lqr",
            ProblemKind::SupplyChain => "supply-chain",
        })
    }
}

/// Everything `chatter solve` needs. Serialized as kebab-case JSON; absent
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct SolveConfig {
    pub problem: ProblemKind,
    pub intervals: usize,
    /// Levels per control dimension before capping.
    pub levels: usize,
    pub level_cap: usize,
    pub gamma: f64,
    /// Relative perturbation: `δp = delta_p · max(1, ‖p0‖)`.
    pub delta_p: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub ridge: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    pub demand: DemandProfile,
    pub amplitude: f64,
    pub period: f64,
    pub fixed_cost_mode: FixedCostMode,
    /// Supply-chain horizon; the LQR horizon is fixed at 1.
    pub horizon: f64,
    /// Defaults to `resolve` for LQR and `frozen-measure` for the supply chain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityMode>,
    pub max_backtracks: usize,
    /// Optional state replay CSV (`interval,x_0,...`) applied when the final
    /// trajectory is re-simulated for export.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let shooting = ShootingConfig::default();
        let grid = GridParams::default();
        SolveConfig {
            problem: ProblemKind::Lqr,
            intervals: 100,
            levels: grid.levels_per_dim,
            level_cap: grid.cap,
            gamma: shooting.gamma,
            delta_p: 1e-3,
            eps: shooting.epsilon,
            max_iters: shooting.max_iterations,
            ridge: shooting.ridge,
            p0: None,
            demand: DemandProfile::Seasonal,
            amplitude: 20.0,
            period: supply_chain::DEFAULT_HORIZON,
            fixed_cost_mode: FixedCostMode::OnOrder,
            horizon: supply_chain::DEFAULT_HORIZON,
            sensitivity: None,
            max_backtracks: shooting.max_backtracks,
            measurements: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl SolveConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ChatterError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChatterError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical form: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals < 1 {
            return Err(ChatterError::Config("intervals must be at least 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ChatterError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.grid().validate()?;
        self.shooting()?.validate()
    }

    pub fn grid(&self) -> GridParams {
        GridParams {
            levels_per_dim: self.levels,
            cap: self.level_cap,
        }
    }

    pub fn propagation(&self) -> PropagationSettings {
        PropagationSettings {
            grid: self.grid(),
            ..PropagationSettings::default()
        }
    }

    pub fn sensitivity_mode(&self) -> SensitivityMode {
        self.sensitivity.unwrap_or(match self.problem {
            ProblemKind::Lqr => SensitivityMode::Resolve,
            ProblemKind::SupplyChain => SensitivityMode::FrozenMeasure,
        })
    }

    pub fn shooting(&self) -> Result<ShootingConfig> {
        Ok(ShootingConfig {
            gamma: self.gamma,
            delta_p: PerturbationSize::Relative(self.delta_p),
            epsilon: self.eps,
            max_iterations: self.max_iters,
            ridge: self.ridge,
            p0_initial: self.p0.clone(),
            sensitivity: self.sensitivity_mode(),
            max_backtracks: self.max_backtracks,
        })
    }

    pub fn build_problem(&self) -> Result<ControlProblem> {
        match self.problem {
            ProblemKind::Lqr => Ok(problems::build_lqr()),
            ProblemKind::SupplyChain => {
                let demand = problems::synthetic_demand(self.demand, self.amplitude, self.period)?;
                let options = SupplyChainOptions {
                    fixed_cost_mode: self.fixed_cost_mode,
                    ..SupplyChainOptions::default()
                };
                problems::build_supply_chain_with(&demand, self.horizon, self.intervals, options)
            }
        }
    }

    pub fn partition(&self, problem: &ControlProblem) -> Result<TimePartition> {
        TimePartition::uniform(problem.horizon(), self.intervals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = SolveConfig {
            problem: ProblemKind::SupplyChain,
            p0: Some(vec![1.0, -2.5]),
            ..SolveConfig::default()
        };
        cfg.measurements = Some(PathBuf::from("replay.csv"));
        let text = cfg.to_json();
        let parsed = SolveConfig::from_json(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_json(), text);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = SolveConfig::from_json(r#"{"problem": "supply-chain", "max-iters": 7}"#).unwrap();
        assert_eq!(cfg.max_iters, 7);
        assert_eq!(cfg.intervals, 100);
        assert_eq!(cfg.sensitivity_mode(), SensitivityMode::FrozenMeasure);
        assert!(SolveConfig::from_json(r#"{"max_iters": 7}"#).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let bad = SolveConfig {
            max_iters: 0,
            ..SolveConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolveConfig {
            level_cap: 0,
            ..SolveConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SolveConfig::default().validate().is_ok());
    }
}
