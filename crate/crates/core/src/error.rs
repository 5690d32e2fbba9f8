use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not a projection (residual {residual:.3e})")]
    NotAProjection { residual: f64 },
    #[error("summand {0} of the projection is zero")]
    EmptyBlock(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("projection is zero")]
    ZeroProjection,
    #[error("eigenvalue iteration did not converge for a {0}x{0} block")]
    ConvergenceFailure(usize),
    #[error("operator is not positive (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("no eigenvalue at or below threshold {0:.3e}")]
    EmptySpectralWindow(f64),
    #[error("c_phi is infinite; no uniformly bounded minimal projections exist")]
    InfiniteCPhi,
    #[error("lambda = {re}{im:+}i is not numerically in the spectrum (min singular value {smin:.3e})")]
    BadLambda { re: f64, im: f64, smin: f64 },
    #[error("total dimension is one; the spectrum cannot be split")]
    DimensionOne,
    #[error("norm is not dominating the operator norm (f_phi(I) = {0})")]
    NotDominating(f64),
    #[error("contour passes within {distance:.3e} of the spectrum (exclusion distance {exclusion:.3e})")]
    ContourThroughSpectrum { distance: f64, exclusion: f64 },
    #[error("contour encloses {enclosed} of {total} eigenvalues; need a nonempty proper subset")]
    EnclosesAllOrNone { enclosed: usize, total: usize },
    #[error("set is a finite union of disjoint closed intervals")]
    FiniteUnion,
    #[error("stored set has too few gaps to produce {0} clopen pieces")]
    InsufficientGaps(usize),
    #[error("no clopen piece keeps the oscillation of f below {0:.3e}")]
    NoSmallPiece(f64),
    #[error("could not find a point off the range within the sampling budget")]
    ExhaustedSamples,
    #[error("phi budget {0} must be strictly less than one")]
    BudgetNotLessThanOne(f64),
    #[error("perturbation has phi = {phi:.6} which is not below the budget {budget:.6}")]
    BudgetViolated { phi: f64, budget: f64 },
    #[error("could not certify a spectral margin at Re z = {0:.3e}")]
    NoMargin(f64),
    #[error("certificate check failed: {0}")]
    CertificateInvalid(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
