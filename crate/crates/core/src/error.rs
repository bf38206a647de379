use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cable spec degenerate: endpoints coincide")]
    DegenerateCable,
    #[error("line direction is parallel to world up")]
    DirectionParallelToUp,
    #[error("sample parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("cannot integrate dynamics while attached to a cable")]
    AttachedStep,
    #[error("step size {0} outside allowed range")]
    BadStep(f64),
    #[error("mass must be positive, got {0}")]
    BadMass(f64),
    #[error("telemetry log parse error at line {line}: {msg}")]
    LogParse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
