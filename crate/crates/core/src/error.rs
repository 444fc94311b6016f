use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the toolkit.
///
/// Every variant names the precondition or check that failed so that
/// front ends can report it verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("problem file: {0}")]
    Parse(String),

    #[error("propagation blow-up: non-finite fundamental solution at x = {x}")]
    PropagationBlowup { x: f64 },

    #[error("boundary zero: 0 ∈ ρ(∂Ω), |f| = exp({log_modulus:.3}) at ({horizontal}, {vertical})")]
    BoundaryZero {
        horizontal: f64,
        vertical: f64,
        log_modulus: f64,
    },

    #[error("winding non-convergence: residual {residual:.3e} (or unresolved argument jump)")]
    NonConvergence { residual: f64 },

    #[error(
        "degenerate operator: eigenvalue {re:.6e}{im:+.6e}i lies within gap tolerance {tolerance:.3e} of the imaginary axis at t = {t}"
    )]
    DegenerateOperator {
        t: f64,
        re: f64,
        im: f64,
        tolerance: f64,
    },

    #[error("matching ambiguity: eigenvalue continuation could not be resolved near t = {t}")]
    MatchingAmbiguity { t: f64 },

    #[error("unresolved discretization: Morse index {coarse} at m = {m_coarse} but {fine} at m = {m_fine}")]
    UnresolvedDiscretization {
        coarse: usize,
        fine: usize,
        m_coarse: usize,
        m_fine: usize,
    },

    #[error("spectral floor violated: eigenvalue with real part {re:.6e} below -{floor} at t = {t}")]
    FloorViolated { t: f64, re: f64, floor: f64 },

    #[error("P not positive definite: smallest eigenvalue {min_eigenvalue:.3e} at x = {x}")]
    NotPositiveDefinite { x: f64, min_eigenvalue: f64 },

    #[error("requires Dirichlet boundary condition")]
    RequiresDirichlet,

    #[error("requires a planar constant-coefficient problem: {0}")]
    NotPlanar(String),

    #[error("conjugate point at the right endpoint x = {x}: operator degenerate")]
    ConjugateAtEndpoint { x: f64 },

    #[error("delta selection: {0}")]
    DeltaSelection(String),

    #[error("Turing conditions violated: {0}")]
    TuringViolated(String),

    #[error("degenerate threshold: {which} threshold {value} is within tolerance of k²π² for k = {k}")]
    DegenerateThreshold {
        which: &'static str,
        k: u64,
        value: f64,
    },

    #[error("degenerate linearization: a = {a}, b = {b} (both must be nonzero)")]
    DegenerateLinearization { a: f64, b: f64 },

    #[error("not a conjugate point: x0 = {x0}")]
    NotConjugatePoint { x0: f64 },

    #[error("check `{check}` failed: {detail}")]
    CheckFailed { check: &'static str, detail: String },

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable name of the violated precondition or failed check.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid-problem",
            Error::Parse(_) => "parse",
            Error::PropagationBlowup { .. } => "propagation-blowup",
            Error::BoundaryZero { .. } => "boundary-zero",
            Error::NonConvergence { .. } => "non-convergence",
            Error::DegenerateOperator { .. } => "degenerate-operator",
            Error::MatchingAmbiguity { .. } => "matching-ambiguity",
            Error::UnresolvedDiscretization { .. } => "unresolved-discretization",
            Error::FloorViolated { .. } => "floor-violated",
            Error::NotPositiveDefinite { .. } => "not-positive-definite",
            Error::RequiresDirichlet => "requires-dirichlet",
            Error::NotPlanar(_) => "not-planar",
            Error::ConjugateAtEndpoint { .. } => "conjugate-at-endpoint",
            Error::DeltaSelection(_) => "delta-selection",
            Error::TuringViolated(_) => "turing-violated",
            Error::DegenerateThreshold { .. } => "degenerate-threshold",
            Error::DegenerateLinearization { .. } => "degenerate-linearization",
            Error::NotConjugatePoint { .. } => "not-conjugate-point",
            Error::CheckFailed { check, .. } => check,
            Error::Eigen(_) => "eigen",
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by degenerate or ill-posed input rather
    /// than by an internal failure.
    pub fn is_ill_posed(&self) -> bool {
        !matches!(
            self,
            Error::CheckFailed { .. } | Error::Eigen(_) | Error::Io(_) | Error::NonConvergence { .. }
        )
    }
}
