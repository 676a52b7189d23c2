use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChatterError {
    #[error("non-finite value from {what} at t = {t}")]
    NonFiniteEvaluation { what: &'static str, t: f64 },

    #[error("no admissible control level keeps the next state within bounds (control dimension {dim:?})")]
    InfeasibleLevels { dim: Option<usize> },

    #[error("chattering level grid is empty")]
    EmptyGrid,

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("correction matrix is singular (condition estimate {condition:e})")]
    SingularCorrection { condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("interval {index}: {source}")]
    AtInterval {
        index: usize,
        #[source]
        source: Box<ChatterError>,
    },

    #[error("perturbed run {index}: {source}")]
    InPerturbation {
        index: usize,
        #[source]
        source: Box<ChatterError>,
    },
}

impl ChatterError {
    pub fn at_interval(self, index: usize) -> Self {
        ChatterError::AtInterval {
            index,
            source: Box::new(self),
        }
    }

    pub fn in_perturbation(self, index: usize) -> Self {
        ChatterError::InPerturbation {
            index,
            source: Box::new(self),
        }
    }

    /// Strips interval/perturbation tags.
    pub fn root(&self) -> &ChatterError {
        match self {
            ChatterError::AtInterval { source, .. } | ChatterError::InPerturbation { source, .. } => {
                source.root()
            }
            other => other,
        }
    }
}

pub type Result<T, E = ChatterError> = std::result::Result<T, E>;
