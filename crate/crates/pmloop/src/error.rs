use thiserror::Error;

/// Errors produced by state construction, simulation, and reconstruction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-amplitude polarization state cannot be normalized")]
    ZeroAmplitude,

    #[error("unknown basis label `{0}` (expected one of H, V, D, A, L, R)")]
    UnknownBasis(String),

    #[error("matrix violates {invariant}: deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    Unphysical {
        invariant: &'static str,
        deviation: f64,
        tolerance: f64,
    },

    #[error("config: {key}: {reason}")]
    InvalidConfig { key: &'static str, reason: String },

    #[error("config: {0}")]
    ConfigParse(String),

    #[error(
        "derived probability {value:.6e} for {context} is outside [0, 1]; config is inconsistent"
    )]
    ProbabilityOutOfRange { context: &'static str, value: f64 },

    #[error("projector set is not tomographically complete (condition number {condition:.3e})")]
    NonSpanningSet { condition: f64 },

    #[error("counts rejected: {0}")]
    BadCounts(String),

    #[error("phase undefined: |rho_VV,HH| = {0:.3e} is below threshold")]
    PhaseUndefined(f64),

    #[error("analyzer calibration impossible: singles response is flat")]
    CalibrationFlat,

    #[error("record stream malformed: {0}")]
    BadRecord(String),

    #[error("i/o error")]
    Io(#[from] std::io::Error),

    #[error("malformed json")]
    Json(#[from] serde_json::Error),
}
