use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("transition matrix is reducible: symbol {to} is unreachable from symbol {from}")]
    Reducible { from: usize, to: usize },

    #[error("transition matrix is periodic: gcd of cycle lengths is {period}")]
    Periodic { period: usize },

    #[error("integer overflow while {0}")]
    Overflow(String),

    #[error("orbit budget exceeded: {needed} orbits requested, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: usize },

    #[error("window {window:?} is not admissible")]
    InadmissibleWindow { window: Vec<u8> },

    #[error("window has length {got}, potential depth is {expected}")]
    WindowLength { expected: usize, got: usize },

    #[error("potentials are defined over different subshifts")]
    MismatchedSft,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("power iteration did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("eigenvalue branch is ambiguous at t = {t}: nearest candidates {nearest:e} and {second:e} apart from the tracked value")]
    BranchAmbiguity { t: f64, nearest: f64, second: f64 },

    #[error("failed to bracket the root; scanned [{low}, {high}]")]
    BracketFailure { low: f64, high: f64 },

    #[error("degenerate variance {sigma2:e}; use the point-mass check instead")]
    DegenerateVariance { sigma2: f64 },

    #[error("orbit window is empty")]
    EmptyWindow,

    #[error("pole fit failed: relative residual {residual:e}")]
    PoorFit { residual: f64 },

    #[error("Re(s) = {re_s} lies in the divergent region (pressure {pressure}, margin {margin})")]
    DivergentRegion {
        re_s: f64,
        pressure: f64,
        margin: f64,
    },

    #[error("observable is not centred: flow mean is {mean:e}")]
    NotCentered { mean: f64 },

    #[error("roof is too close to a constant (variance {variance:e})")]
    DegenerateRoof { variance: f64 },

    #[error("roof value {value} on window {window:?} is not strictly positive")]
    NonPositiveRoof { window: Vec<u8>, value: f64 },

    #[error("pressure {pressure} must be strictly positive")]
    NonPositivePressure { pressure: f64 },

    #[error("need at least {needed} nonzero data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("period scan and coboundary solver disagree: {0}")]
    CertificateDisagreement(String),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed matrices, potentials or parameters.
    Input,
    /// A configured resource limit was hit.
    Budget,
    /// A numerical procedure failed.
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidMatrix(_)
            | Reducible { .. }
            | Periodic { .. }
            | InadmissibleWindow { .. }
            | WindowLength { .. }
            | MismatchedSft
            | InvalidParameter(_)
            | NonPositiveRoof { .. }
            | NonPositivePressure { .. }
            | NotCentered { .. }
            | DegenerateRoof { .. }
            | EmptyWindow
            | DivergentRegion { .. }
            | TooFewPoints { .. } => ErrorClass::Input,
            BudgetExceeded { .. } | Overflow(_) => ErrorClass::Budget,
            NonConvergence { .. }
            | BranchAmbiguity { .. }
            | BracketFailure { .. }
            | DegenerateVariance { .. }
            | PoorFit { .. }
            | CertificateDisagreement(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
