use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcsError {
    #[error("tensor slot {slot} out of range for a system with {slots} slots")]
    SlotOutOfRange { slot: usize, slots: usize },

    #[error("local operator must be 2x2, got {rows}x{cols}")]
    LocalDimension { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds {requested:e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("g = eta*J factorization mismatch {discrepancy:e} for N = {periods}")]
    FactorizationMismatch { discrepancy: f64, periods: u64 },

    #[error("Hartmann-Hahn regime: nu = {nu:e} rad/s does not exceed Omega = {omega:e} rad/s")]
    HartmannHahnRegime { nu: f64, omega: f64 },

    #[error("resonance precondition violated: omega_n = {omega_n:e}, resonance at {resonance:e} (k_D = {k_d})")]
    OffResonance { omega_n: f64, resonance: f64, k_d: i64 },

    #[error("unitarity drift {drift:e} exceeds tolerance {tolerance:e} at t = {time:e} s")]
    UnitarityDrift { drift: f64, tolerance: f64, time: f64 },

    #[error("state drift {drift:e} exceeds tolerance {tolerance:e} at t = {time:e} s")]
    StateDrift { drift: f64, tolerance: f64, time: f64 },

    #[error("non-finite state at t = {time:e} s")]
    NonFinite { time: f64 },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),
}

pub type Result<T> = std::result::Result<T, DcsError>;
