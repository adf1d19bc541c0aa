use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert-space dimension {0}, need at least 2")]
    InvalidDimension(usize),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("decay rate must be non-negative, got {0}")]
    InvalidRate(f64),

    #[error("adiabatic frame is undefined when both couplings vanish")]
    DegenerateFrame,

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error(
        "eigenbasis is ill-conditioned (condition number {condition:.3e}); \
         close to an exceptional point, propagate in the time domain instead"
    )]
    IllConditioned { condition: f64 },

    #[error(
        "mode {index} has a zero eigenvalue with non-zero projected pump {pump:.3e}; \
         it grows linearly in time"
    )]
    SecularGrowth { index: usize, pump: f64 },

    #[error(
        "step size underflow at t = {t} (h = {step:.3e}); the problem looks stiff{}",
        gap.map(|g| format!(", Liouvillian gap estimate {g:.3e}")).unwrap_or_default()
    )]
    StepSizeUnderflow { t: f64, step: f64, gap: Option<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
