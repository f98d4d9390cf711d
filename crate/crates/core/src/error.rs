use thiserror::Error;

/// Everything that can go wrong while building or analysing a model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbrwError {
    #[error("invalid step law: {0}")]
    InvalidStepLaw(String),

    #[error("invalid offspring law: {0}")]
    InvalidOffspring(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("rate {a} exceeds the largest step {max_step}; the event is impossible")]
    InfeasibleRate { a: f64, max_step: i64 },

    #[error(
        "rate {a} lies below the mean step {mean}; only the right branch a >= mean is supported"
    )]
    OutOfBranch { a: f64, mean: f64 },

    #[error("discount rate must be positive, got {0}")]
    InvalidRate(f64),

    #[error(
        "model is not supercritical: m(1 - q_esc) = {growth:.6} <= 1 \
         (the supercritical condition m(1 - q_esc) > 1 fails)"
    )]
    Subcritical { growth: f64 },

    #[error("lattice window of {cells} cells exceeds the budget of {budget} cells (~{bytes} bytes needed)")]
    MemoryBudget {
        cells: usize,
        budget: usize,
        bytes: usize,
    },

    #[error(
        "renewal sequence has period {period}; sub-sample by the period before asking for a limit"
    )]
    PeriodicRenewal { period: u64 },

    #[error("walk has period {period}; the fluctuation law needs an aperiodic walk (period 1)")]
    UnsupportedPeriod { period: u64 },

    #[error("second moment of the offspring law is infinite or unavailable")]
    InfiniteSecondMoment,

    #[error("offspring moments at site {site}: E[N^2] = {m2} < E[N] = {m1}")]
    InvalidOffspringMoments { site: i64, m1: f64, m2: f64 },

    #[error("catalyst moment matrix is reducible")]
    Reducible,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no generation in the requested range has fractional part within {tol} of {target}")]
    EmptySelection { target: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CbrwError>;
