use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointNotFound { x: f64, y: f64 },

    #[error("degenerate element {element}: signed area {area:e}")]
    DegenerateElement { element: usize, area: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("matrix is not positive definite on the free nodes (p.Ap = {curvature:e} at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("singular evaluation at the corner: {0}")]
    Singularity(String),

    #[error("coefficient field is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("gauge error: right-hand side mean {mean:e} exceeds tolerance")]
    Gauge { mean: f64 },

    #[error("mesh does not resolve the oscillation: {0}")]
    Resolution(String),

    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("rank deficient Gram matrix: {0}")]
    Rank(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
