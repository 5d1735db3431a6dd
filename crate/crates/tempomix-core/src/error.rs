use thiserror::Error;

/// Errors across all subsystems. Validation errors come from malformed
/// inputs; computation errors are runtime outcomes of well-formed inputs.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("transition matrix is not aperiodic (no positive power up to N^2)")]
    NotAperiodic,

    #[error("invalid system: {0}")]
    BadSystem(String),

    #[error("invalid cylinder function: {0}")]
    BadFunction(String),

    #[error("depth mismatch: {0}")]
    DepthMismatch(String),

    #[error("leading eigenvalue is not simple within tolerance (relative separation {sep:.3e})")]
    DegenerateSpectrum { sep: f64 },

    #[error("points share no common future")]
    NotStableEquivalent,

    #[error("points share no common past")]
    NotUnstableEquivalent,

    #[error("spliced point is not admissible at the junction")]
    SpliceInadmissible,

    #[error("representable window cannot support the required number of shifts")]
    WindowExhausted,

    #[error("roof construction infeasible at depth {depth} (need depth >= {min_depth})")]
    InfeasibleTargets { depth: usize, min_depth: usize },

    #[error("continued fraction terminated after {terms} terms: input is rational")]
    RationalTerminated { terms: usize },

    #[error("circle lower bound violated at b = {b} (value {value:.6e} < bound {bound:.6e})")]
    BoundViolated { b: f64, value: f64, bound: f64 },

    #[error("no rectangle clears the four-point bound at b = {b}")]
    NoWitness { b: f64 },

    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),

    #[error("all preimage phases align within tolerance at b = {b}")]
    NoPair { b: f64 },

    #[error("fewer than {min} grid points above the noise floor")]
    InsufficientSignal { min: usize },

    #[error("roof has trivial temporal range; orbit-count error term does not apply")]
    LatticeRoof,

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Process exit code: 2 for validation failures, 3 for computation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BadSystem(_)
            | Error::BadFunction(_)
            | Error::DepthMismatch(_)
            | Error::NotAperiodic
            | Error::InvalidConfig(_)
            | Error::PreconditionUnmet(_)
            | Error::DomainError(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
