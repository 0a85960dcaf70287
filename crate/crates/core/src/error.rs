use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("model is invalid: {0}")]
    InvalidModel(String),

    #[error("Newton iteration did not converge from seed {seed:?} after {steps} steps")]
    NonConvergence { seed: Vec<f64>, steps: usize },

    #[error("degenerate critical point at {location:?}: |min eig| / |max eig| = {ratio:.3e}")]
    DegenerateCritical { location: Vec<f64>, ratio: f64 },

    #[error("landscape is not a double well: {0}")]
    NotDoubleWell(String),

    #[error("eigenvalue too close to the imaginary axis: {0}")]
    ImaginaryAxisEigenvalue(String),

    #[error("invariant subspace is not a graph over the base: {0}")]
    NotAGraph(String),

    #[error("no epsilon in the candidate ladder certifies positivity")]
    NoPositiveEpsilon,

    #[error("dynamical hypothesis fails: {0}")]
    HypothesisFails(String),

    #[error("trajectory blow-up: |x({t:.3})| = {norm:.3e}")]
    Blowup { t: f64, norm: f64 },

    #[error("gauge overflow: entry magnitude {0:.3e} (grid too coarse for this h)")]
    GaugeOverflow(f64),

    #[error("dimension {0} unsupported by the discrete complex")]
    DimensionUnsupported(usize),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("Arnoldi did not converge: {0}")]
    NotConverged(String),

    #[error("Ritz residual too large: {0}")]
    ResidualTooLarge(String),

    #[error("lattice enumeration overflow: more than {0} entries")]
    Overflow(usize),

    #[error("splitting eigenvalue has imaginary part {im:.3e} exceeding tolerance for |{val:.3e}|")]
    ComplexSplitting { val: f64, im: f64 },

    #[error("splitting fit rejected: R^2 = {0}")]
    BadFit(f64),

    #[error("quasimode pairing has non-positive sign: l = {l:.3e}, l* = {l_star:.3e}")]
    SignViolation { l: f64, l_star: f64 },

    #[error("incoming curve left the quadratic trust region: {0}")]
    CurveEscapesQuadraticRegion(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
