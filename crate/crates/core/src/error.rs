use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {context} (expected {expected}, got {actual})")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("degenerate cluster centers: smallest eigenvalue of sigma is {sigma_min:e}")]
    DegenerateCenters { sigma_min: f64 },

    #[error("invalid clusterable spec: {0}")]
    InvalidSpec(String),

    #[error("insufficient samples for {what}: need {needed}, have {available}")]
    InsufficientSamples {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("{what} needs at least {min} inputs, got {actual}")]
    Arity {
        what: &'static str,
        min: usize,
        actual: usize,
    },

    #[error("cannot choose {requested} distinct artificial labels from {available} classes")]
    LabelExhaustion { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Diverged { .. } | Error::DegenerateCenters { .. }
        )
    }
}
