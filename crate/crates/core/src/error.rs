use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("matrix exponential overflow: {0}")]
    Overflow(String),

    #[error("coefficient truncation deficit {achieved:.3e} exceeds target {target:.3e} at hard cap {cap}")]
    CoefficientDeficit {
        achieved: f64,
        target: f64,
        cap: usize,
    },

    #[error("numerical integrity: {0}")]
    Integrity(#[from] IntegrityError),
}

/// Failures that signal a numerically invalid run rather than a bad input.
///
/// These are alarms: the computation detected that its own truncations or
/// step sizes can no longer be trusted, and refuses to return silently
/// wrong numbers.
#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error("counting intensity k_t = {value:.3e} < -1e-9 at t = {t:.6}; hierarchy truncation too small")]
    NegativeIntensity { t: f64, value: f64 },

    #[error("hierarchy truncation stress {stress:.3e} exceeded limit {limit:.3e} at t = {t:.6}")]
    TruncationStress { t: f64, stress: f64, limit: f64 },

    #[error("trajectory weight underflowed at step {step}; trajectory is dead")]
    DeadTrajectory { step: usize },

    #[error("jump probability k_t*dt = {k_dt:.3} > 0.5 at t = {t:.6}; dt far too coarse")]
    StepTooCoarse { t: f64, k_dt: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
