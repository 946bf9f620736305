use thiserror::Error;

/// Errors raised by model validation, simulation and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("spectrum violates S(-θ) = conj(S(θ)) at node {node} (θ = {theta}, deviation {deviation:e})")]
    SymmetryViolation {
        node: usize,
        theta: f64,
        deviation: f64,
    },

    #[error("spectral matrix at node {node} (θ = {theta}) is not positive semidefinite: {detail}")]
    NotPsdNode {
        node: usize,
        theta: f64,
        detail: String,
    },

    #[error("eigen-solver did not converge at node {node} (θ = {theta})")]
    EigenFailure { node: usize, theta: f64 },

    #[error("autocovariance has imaginary residue {residue:e} at lag {lag}; spectrum is not real-symmetric")]
    ImaginaryAutocovariance { lag: usize, residue: f64 },

    #[error("covariance is not positive definite after jitter: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "undersampled: {occupied} occupied cells exceed R/10 = {limit} at m = {m}; reduce k or m"
    )]
    Undersampled {
        occupied: usize,
        limit: usize,
        m: u32,
    },

    #[error("component {component} has zero variance; apply normalize_components first")]
    ZeroVariance { component: usize },

    #[error("sample {value} cannot be quantized exactly at precision m = {m}")]
    QuantizerOverflow { value: f64, m: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "water-level bisection did not converge: bracket [{lo:e}, {hi:e}], target D = {target:e}"
    )]
    Bisection { lo: f64, hi: f64, target: f64 },

    #[error("quadrature failure: residual mass {residual:e}")]
    Quadrature { residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
