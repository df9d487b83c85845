use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "cannot place {requested} emitters with minimum distance {min_distance_nm} nm in a \
         {radius_nm} nm sphere: placed {placed} (requested packing fraction {packing_fraction:.3}, \
         random sequential placement saturates near {achievable_fraction:.2})"
    )]
    PackingFailure {
        requested: usize,
        placed: usize,
        radius_nm: f64,
        min_distance_nm: f64,
        packing_fraction: f64,
        achievable_fraction: f64,
    },

    #[error("emitters {i} and {j} share a position")]
    CoincidentEmitters { i: usize, j: usize },

    #[error("coupling matrix is not positive semi-definite: eigenvalue {eigenvalue:e}")]
    NotPositiveSemiDefinite { eigenvalue: f64 },

    #[error("eigen-decomposition did not converge")]
    EigenNonConvergence,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("{what} supports at most {max} emitters, got {n}")]
    ScaleLimit {
        what: &'static str,
        max: usize,
        n: usize,
    },

    #[error(
        "insufficient coincidence statistics: {count} expected pairs, need at least {required}"
    )]
    InsufficientPairs { count: f64, required: f64 },

    #[error("fit did not converge after {iterations} iterations")]
    FitNonConvergence { iterations: usize },

    #[error("fit needs at least {required} nonzero bins, histogram has {nonzero}")]
    TooFewBins { nonzero: usize, required: usize },

    #[error("no physical root for cubic with coefficients {coefficients:?}")]
    NoPhysicalRoot { coefficients: [f64; 4] },

    #[error("{0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::PackingFailure { .. } => "packing_failure",
            Error::CoincidentEmitters { .. } => "coincident_emitters",
            Error::NotPositiveSemiDefinite { .. } => "not_psd",
            Error::EigenNonConvergence => "eigen_non_convergence",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidState(_) => "invalid_state",
            Error::ScaleLimit { .. } => "scale_limit",
            Error::InsufficientPairs { .. } => "insufficient_pairs",
            Error::FitNonConvergence { .. } => "fit_non_convergence",
            Error::TooFewBins { .. } => "too_few_bins",
            Error::NoPhysicalRoot { .. } => "no_physical_root",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
