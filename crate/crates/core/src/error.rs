use thiserror::Error;

use crate::identity::Witness;
use crate::parser::ParseDiagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {}: {}", .0.offset, .0.message)]
    Parse(ParseDiagnostic),

    #[error("malformed expression: {0}")]
    Malformed(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid parameter name `{0}`")]
    InvalidParameterName(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The expression has no image in the current exact field (transcendental
    /// atom or a radical not commensurable with the cube-root generator).
    #[error("not representable in exact arithmetic: {0}")]
    NotExact(String),

    #[error("expression contains J but no I3 is available in the context")]
    MissingI3,

    #[error("I3 vanishes identically; the invariant tower is undefined")]
    WuenschmannZero,

    #[error("inconclusive sampling for `{condition}`: every resample hit a singular locus")]
    InconclusiveSampling { condition: String },

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),

    #[error("invalid target form: {0}")]
    InvalidTarget(String),

    #[error("classification mismatch: expected {expected}, found {found}")]
    ClassificationMismatch { expected: String, found: String },

    #[error("rejected ansatz: residual `{equation}` does not vanish")]
    RejectedAnsatz {
        equation: String,
        witness: Option<Box<Witness>>,
    },

    #[error("integration path error: {0}")]
    Path(String),

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("fixture error: {0}")]
    Fixture(String),
}

impl Error {
    /// Attach a condition name to sampling failures.
    pub fn with_condition(self, name: &str) -> Self {
        match self {
            Error::InconclusiveSampling { .. } => Error::InconclusiveSampling {
                condition: name.to_string(),
            },
            other => other,
        }
    }
}
