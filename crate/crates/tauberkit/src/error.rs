use thiserror::Error;

/// Every failure mode surfaced by the toolkit.
///
/// Variants split into three families that the command-line front end maps to
/// distinct exit codes: malformed input, numerical faults, and violated
/// inequalities (see [`Error::family`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("supremum did not stabilize by index {max_index} at x = {x}")]
    NonConvergent { x: f64, max_index: usize },
    #[error("series test inconclusive at index {max_index}")]
    Inconclusive { max_index: usize },
    #[error("value {y} outside the range [{lo}, {hi}] of the function")]
    OutOfRange { y: f64, lo: f64, hi: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("decay exponent {fitted:.4} is below the required {required:.4}")]
    DecayNotAchieved { fitted: f64, required: f64 },
    #[error("degenerate branch: |c| = {c} < 1/2 and d = {d} <= 1/2")]
    BranchDegenerate { c: f64, d: f64 },
    #[error("S grows too fast for the test-function window: {0}")]
    TailUnbounded(String),
    #[error("test function violates the sign pattern required for order {m}")]
    SignPatternViolation { m: usize },
    #[error("space side {space} and frequency side {freq} differ beyond tolerance")]
    MismatchBeyondTolerance { space: f64, freq: f64 },
    #[error("weight norm is not finite: {0}")]
    NormDiverges(String),
    #[error("regression residual {residual} exceeds {limit}")]
    FitUnstable { residual: f64, limit: f64 },
    #[error("integrand (f - g)/t diverges at t = 0: first moments differ by {0}")]
    SingularAtZero(f64),
    #[error("inequality violated: {0}")]
    InequalityViolated(String),
}

/// Coarse grouping of [`Error`] variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Schema,
    Numerical,
    Assertion,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_) => ErrorFamily::Schema,
            Error::MismatchBeyondTolerance { .. }
            | Error::InequalityViolated(_)
            | Error::SignPatternViolation { .. } => ErrorFamily::Assertion,
            _ => ErrorFamily::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
