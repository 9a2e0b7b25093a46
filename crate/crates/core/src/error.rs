use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// Most variants are domain conditions a caller can branch on (a point
/// past the blow-up time, a divergent integral); the remaining ones report
/// invalid input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("evaluation at t = {t} is at or past the critical time T = {critical}")]
    EvaluationAtOrPastBlowup { t: f64, critical: f64 },

    #[error("unsupported dimension n = {n}: {reason}")]
    UnsupportedDimension { n: usize, reason: &'static str },

    #[error("gamma function pole at z = {0}")]
    PoleArgument(f64),

    #[error("gamma({0}) overflows f64; use ln_gamma")]
    Overflow(f64),

    #[error("argument must be positive, got z = {0}")]
    NonPositiveArgument(f64),

    #[error("density is singular at u = 0 when p > 0")]
    ZeroVelocityWithPositiveP,

    #[error("time must be positive, got t = {0}")]
    NonPositiveTime(f64),

    #[error("finite-difference stencil at ({reason}) is not smooth")]
    NonSmoothPoint { reason: String },

    #[error("truncated ratio did not stabilise (last {last}, previous {previous})")]
    RatioNotConverged { last: f64, previous: f64 },

    #[error("denominator integral underflowed at the requested point")]
    SingularDenominator,

    #[error("integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("closed form requires p = {expected}, got p = {got}")]
    WrongExponent { expected: f64, got: f64 },

    #[error("unsupported parameters: {0}")]
    UnsupportedParameters(String),

    #[error("blow-up coefficient is undefined at p = 1 (Gamma pole)")]
    UndefinedAtP1,

    #[error("p = {p} is outside the regime of this asymptotic formula")]
    OutOfRegime { p: f64 },

    #[error("kernel weights underflow near x = {0:?}")]
    InsufficientLocalMass(Vec<f64>),

    #[error("observable density underflows at x = {0}")]
    ZeroDensity(f64),

    #[error("io: {0}")]
    Io(String),

    #[error("malformed sample file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
