use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure has neither atoms nor a density")]
    EmptyMeasure,
    #[error("total mass {total} differs from 1 (pass renormalize to accept)")]
    Normalization { total: f64 },
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown builtin measure `{0}`")]
    UnknownBuiltin(String),
    #[error("integrand is not finite at {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("evaluation point {re}{im:+}i lies on the support")]
    PoleOnSupport { re: f64, im: f64 },
    #[error("fixed point iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("recovered mass defect {defect:e} exceeds tolerance")]
    MassDefect { defect: f64 },
    #[error("circle subordination is degenerate (vanishing first moment)")]
    DegenerateFirstMoment,
    #[error("value undefined at t = {t}")]
    UndefinedAtPoint { t: f64 },
    #[error("limit unstable at t = {t}: {coarse} vs {fine}")]
    UnstableLimit { t: f64, coarse: f64, fine: f64 },
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Numerical failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::MassDefect { .. }
                | Error::DegenerateFirstMoment
                | Error::UndefinedAtPoint { .. }
                | Error::UnstableLimit { .. }
                | Error::NonFiniteIntegrand { .. }
                | Error::InsufficientData(_)
        )
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyMeasure => "EmptyMeasure",
            Error::Normalization { .. } => "NormalizationError",
            Error::DomainViolation(_) => "DomainViolation",
            Error::InvalidInput(_) => "InvalidInput",
            Error::UnknownBuiltin(_) => "UnknownBuiltin",
            Error::NonFiniteIntegrand { .. } => "NonFiniteIntegrand",
            Error::PoleOnSupport { .. } => "PoleOnSupport",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::MassDefect { .. } => "MassDefect",
            Error::DegenerateFirstMoment => "DegenerateFirstMoment",
            Error::UndefinedAtPoint { .. } => "UndefinedAtPoint",
            Error::UnstableLimit { .. } => "UnstableLimit",
            Error::UnsupportedCase(_) => "UnsupportedCase",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InsufficientData(_) => "InsufficientData",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
