use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("growth bound violated: c(x)/x = {ratio} exceeds cbar_sup = {bound} at x = {x}")]
    CBoundViolated { x: f64, ratio: f64, bound: f64 },
    #[error("fragmentation rate unbounded: K({x}) = {value} exceeds Ksup = {bound}")]
    KUnbounded { x: f64, value: f64, bound: f64 },
    #[error("ratio density integrates to {integral}, expected 1")]
    RatioDensityNotNormalized { integral: f64 },
    #[error("moment quadrature diverged at exponent s = {s}")]
    Diverged { s: f64 },
    #[error("numeric flow exceeded step cap while integrating from x = {x} over dt = {dt}")]
    FlowDiverged { x: f64, dt: f64 },
    #[error("no hitting sample reached the target before the censor time")]
    NoHits,
    #[error("root bracketing failed: L({q_lo}) = {value} <= 1 at the lower search bound")]
    BracketFailure { q_lo: f64, value: f64 },
    #[error("tilted acceptance probability {prob} > 1 at mass {x} (stale or too-coarse ell table)")]
    BoundViolated { x: f64, prob: f64 },
    #[error("derivative estimate flagged divergent at y = {y}")]
    DivergentDerivative { y: f64 },
    #[error("Laplace exponent argument {theta} outside domain (theta <= -beta = {limit})")]
    OutOfDomain { theta: f64, limit: f64 },
    #[error("degenerate parameters: lambda*beta/a = beta^2, so theta0 = 1")]
    DriftZero,
    #[error("PDE domain too small: support reaches {reach} but x_max = {x_max}")]
    DomainTooSmall { reach: f64, x_max: f64 },
    #[error("CFL violation: dt = {dt} exceeds the stable bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("moment M(-B) diverges for B = {b} (ratio-law tail too heavy)")]
    MomentDiverged { b: f64 },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("validation failed:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    ValidationFailed(Vec<Error>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CBoundViolated { .. } => "CBoundViolated",
            Error::KUnbounded { .. } => "KUnbounded",
            Error::RatioDensityNotNormalized { .. } => "RatioDensityNotNormalized",
            Error::Diverged { .. } => "Diverged",
            Error::FlowDiverged { .. } => "FlowDiverged",
            Error::NoHits => "NoHits",
            Error::BracketFailure { .. } => "BracketFailure",
            Error::BoundViolated { .. } => "BoundViolated",
            Error::DivergentDerivative { .. } => "DivergentDerivative",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::DriftZero => "DriftZero",
            Error::DomainTooSmall { .. } => "DomainTooSmall",
            Error::CflViolation { .. } => "CflViolation",
            Error::MomentDiverged { .. } => "MomentDiverged",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ValidationFailed(_) => "ValidationFailed",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit code: 2 validation, 3 estimation, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CBoundViolated { .. }
            | Error::KUnbounded { .. }
            | Error::RatioDensityNotNormalized { .. }
            | Error::OutOfDomain { .. }
            | Error::DriftZero
            | Error::MomentDiverged { .. }
            | Error::InvalidConfig(_)
            | Error::ValidationFailed(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
