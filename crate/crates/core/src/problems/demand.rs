use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ChatterError, Result};
use crate::problems::tables;

pub type DemandFn = Arc<dyn Fn(f64, usize, usize) -> f64 + Send + Sync>;

/// Continualized demand `Θ(t, customer, item)`; customer and item are
/// zero-based.
#[derive(Clone)]
pub struct DemandModel {
    theta: DemandFn,
    description: String,
}

impl fmt::Debug for DemandModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DemandModel").field("description", &self.description).finish()
    }
}

impl DemandModel {
    /// Wraps a custom demand curve. Negative outputs are clipped to zero.
    pub fn new(description: impl Into<String>, theta: impl Fn(f64, usize, usize) -> f64 + Send + Sync + 'static) -> Self {
        DemandModel {
            theta: Arc::new(theta),
            description: description.into(),
        }
    }

    pub fn theta(&self, t: f64, customer: usize, item: usize) -> f64 {
        (self.theta)(t, customer, item).max(0.0)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DemandProfile {
    Constant,
    Seasonal,
    Pulse,
}

impl fmt::Display for DemandProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandProfile::Constant => "constant",
            DemandProfile::Seasonal => "seasonal",
            DemandProfile::Pulse => "pulse",
        })
    }
}

/// Deterministic demand shapes.
///
/// * constant: `Θ ≡ amplitude`
/// * seasonal: `amplitude · (1 + sin(2πt/period)) / 2`, scaled by customer importance
/// * pulse: `amplitude` on `[period, 2·period)`, zero elsewhere
pub fn synthetic_demand(profile: DemandProfile, amplitude: f64, period: f64) -> Result<DemandModel> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(ChatterError::Config(format!("demand amplitude must be non-negative, got {amplitude}")));
    }
    let description = format!("{profile} demand, amplitude {amplitude}, period {period}");
    match profile {
        DemandProfile::Constant => Ok(DemandModel::new(description, move |_, _, _| amplitude)),
        DemandProfile::Seasonal => {
            if !(period.is_finite() && period > 0.0) {
                return Err(ChatterError::Config(format!("seasonal demand needs a positive period, got {period}")));
            }
            let importance: Vec<f64> = tables::customers().iter().map(|c| c.importance).collect();
            Ok(DemandModel::new(description, move |t, customer, _| {
                let scale = importance.get(customer).copied().unwrap_or(1.0);
                scale * amplitude * (1.0 + (2.0 * PI * t / period).sin()) / 2.0
            }))
        }
        DemandProfile::Pulse => {
            if !(period.is_finite() && period >= 0.0) {
                return Err(ChatterError::Config(format!("pulse demand needs a non-negative period, got {period}")));
            }
            Ok(DemandModel::new(description, move |t, _, _| {
                if t >= period && t < 2.0 * period {
                    amplitude
                } else {
                    0.0
                }
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_examples() {
        let zero = synthetic_demand(DemandProfile::Constant, 0.0, 1.0).unwrap();
        assert_eq!(zero.theta(3.3, 2, 4), 0.0);

        let pulse = synthetic_demand(DemandProfile::Pulse, 5.0, 1.0).unwrap();
        assert_eq!(pulse.theta(1.5, 0, 0), 5.0);
        assert_eq!(pulse.theta(0.5, 0, 0), 0.0);
        assert_eq!(pulse.theta(2.0, 0, 0), 0.0);

        let seasonal = synthetic_demand(DemandProfile::Seasonal, 8.0, 4.0).unwrap();
        assert!((seasonal.theta(1.0, 0, 3) - 8.0).abs() < 1e-12);
        assert!((seasonal.theta(1.0, 1, 3) - 3.2).abs() < 1e-12);
        assert!(seasonal.theta(3.0, 0, 0).abs() < 1e-12);
    }

    #[test]
    fn bad_parameters() {
        assert!(synthetic_demand(DemandProfile::Constant, -1.0, 1.0).is_err());
        assert!(synthetic_demand(DemandProfile::Seasonal, 1.0, 0.0).is_err());
        assert!(synthetic_demand(DemandProfile::Pulse, f64::NAN, 1.0).is_err());
    }
}
