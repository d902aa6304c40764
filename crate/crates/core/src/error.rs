use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// A gating time constant evaluated to a non-positive value.
    #[error("malformed kinetics: time constant {tau} ms at v = {v} mV")]
    MalformedKinetics { tau: f64, v: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("regressor block `{block}` is not diagonal")]
    NonDiagonal { block: String },

    #[error("non-finite derivative at t = {t} ms")]
    NonFinite { t: f64 },

    /// Any failure raised while integrating, tagged with the simulation time.
    #[error("integration failed at t = {t} ms: {cause}")]
    StepFailed { t: f64, cause: Box<Error> },

    #[error("window of {window} ms exceeds trace span of {span} ms")]
    WindowTooLong { window: f64, span: f64 },

    #[error("traces do not share a time grid")]
    GridMismatch,

    #[error("trace is missing column `{0}`")]
    MissingColumn(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepFailed { .. }
                | Error::NonFinite { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::MalformedKinetics { .. }
        )
    }
}

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dims(what, expected, got))
    }
}
