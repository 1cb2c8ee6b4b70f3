use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShmError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite integrand")]
    NonFiniteIntegrand,
    #[error("convolution overflow at x = {x}")]
    ConvolutionOverflow { x: f64 },
    #[error("bracket invalid: p({lo}) = {p_lo}, p({hi}) = {p_hi}")]
    BracketInvalid {
        lo: f64,
        hi: f64,
        p_lo: f64,
        p_hi: f64,
    },
    #[error("zero total mass")]
    ZeroMass,
    #[error("mass underflow")]
    MassUnderflow,
    #[error("integrand does not decay at the grid boundary (relative mass {ratio:e} at x = {x})")]
    Truncation { x: f64, ratio: f64 },
    #[error("U must be even (|U(x) - U(-x)| = {gap:e} at x = {x})")]
    OddConfinement { x: f64, gap: f64 },
    #[error("curvature unavailable")]
    CurvatureUnavailable,
    #[error("normalization diverges")]
    NormalizationDiverges,
    #[error("x = {0} outside grid")]
    OutsideGrid(f64),
    #[error("z = {z} in spectrum [-{edge}, {edge}]")]
    InSpectrum { z: f64, edge: f64 },
    #[error("polynomial sign pattern violated ({changes} sign changes)")]
    SignPattern { changes: usize },
    #[error("ensemble too small for regression (N = {0}, need at least 100)")]
    EnsembleTooSmall(usize),
    #[error("insufficient samples: {got} < {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ShmError {
    fn from(e: std::io::Error) -> Self {
        ShmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ShmError>;
