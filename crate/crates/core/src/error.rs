use thiserror::Error;

/// Errors raised while building models, running filters, or evaluating oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("all incremental weights are zero or non-finite at stage {stage}")]
    DegenerateWeights { stage: usize },

    #[error("resampling at stage {stage} produced an empty population")]
    PopulationExtinction { stage: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("observations have zero marginal likelihood")]
    InconsistentObservations,

    #[error("non-finite variance term at index {index}")]
    NonFiniteMoment { index: usize },

    #[error("ambiguous resampling schedule: limiting cv^2 {value} within {margin} of threshold {threshold} at stage {stage}")]
    AmbiguousSchedule {
        stage: usize,
        value: f64,
        threshold: f64,
        margin: f64,
    },

    #[error("enumeration needs {atoms} atoms, budget is {budget}")]
    EnumerationBudget { atoms: u128, budget: u128 },

    #[error("{source} (stage trace: cv2 = {cv2_trace:?})")]
    Annotated {
        #[source]
        source: Box<SmcError>,
        cv2_trace: Vec<f64>,
    },
}

impl SmcError {
    /// Strips any run-context annotation.
    pub fn root(&self) -> &SmcError {
        match self {
            SmcError::Annotated { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = SmcError> = std::result::Result<T, E>;
