use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{x} is not invertible modulo {c}")]
    NotCoprime { x: i64, c: u64 },
    #[error("modulus {c} exceeds the configured cap {cap}")]
    ModulusTooLarge { c: u64, cap: u64 },
    #[error("gamma has a pole at {0}")]
    PoleAtNonpositiveInteger(f64),
    #[error("zeta has a pole at s = 1")]
    PoleAtOne,
    #[error("argument {0} is outside the validated range")]
    OutOfValidatedRange(String),
    #[error("series Bessel evaluation needs x <= {max}, got {x}")]
    SeriesRegimeExceeded { x: f64, max: f64 },
    #[error("quadrature did not reach tolerance: {0}")]
    QuadratureFailure(String),
    #[error("|Im r| = {0} is outside the regularity strip")]
    OutsideRegularityStrip(f64),
    #[error("form needs {required} coefficients, only {available} present")]
    InsufficientCoefficients { required: usize, available: usize },
    #[error("r = {0} is below the supported regime r >= 15")]
    RegimeTooSmall(f64),
    #[error("Kloosterman tail not below tolerance before modulus {0}")]
    TailNotConvergent(u64),
    #[error("form at kappa = {0} has no alpha")]
    MissingAlpha(f64),
    #[error("target {target} has a neighbour within {gap} (< 5 G)")]
    PoorIsolation { target: f64, gap: f64 },
    #[error("denominator {0:e} too small for a stable ratio")]
    DivisionUnstable(f64),
    #[error("least-squares design is singular")]
    SingularFit,
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("network: {0}")]
    Network(String),
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
