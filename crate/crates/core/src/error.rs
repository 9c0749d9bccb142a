use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {asymmetry:.3e})")]
    NotSkew { asymmetry: f64 },

    #[error("matrix is degenerate (smallest singular value {min_singular:.3e})")]
    Degenerate { min_singular: f64 },

    #[error("matrix is not a rotation: {0}")]
    NotRotation(String),

    #[error("metric is not symmetric positive definite")]
    SingularMetric,

    #[error("invalid inertia parameters: {0}")]
    InvalidInertia(String),

    #[error("rotor inertia is singular")]
    SingularRotorInertia,

    #[error("navigation weights must be symmetric positive definite")]
    InvalidWeights,

    #[error("kappa = {kappa} outside the open interval ({lower}, {upper})")]
    KappaOutOfRange { kappa: f64, lower: f64, upper: f64 },

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("invalid integrator settings: {0}")]
    InvalidIntegrator(String),

    #[error("state diverged at sample {index} (t = {time})")]
    DivergedState { index: usize, time: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
