use thiserror::Error;

/// Errors surfaced by the library. Best-effort payloads ride along where a
/// caller can still use a partial answer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("element budget exceeded in {what}: reached {partial} elements (limit {limit})")]
    BudgetExceeded {
        what: &'static str,
        partial: usize,
        limit: usize,
    },
    #[error("element not reached within radius {radius}")]
    NotGenerated { radius: u32 },
    #[error("invalid input: {0}")]
    InvalidSpec(String),
    #[error("fiber dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sections belong to different twisted systems")]
    SystemMismatch,
    #[error("element is not invertible: Neumann contraction {contraction}")]
    NotInvertible { contraction: f64 },
    #[error("Neumann series stalled after {terms} terms (last increment {last_increment:e})")]
    SlowConvergence { terms: usize, last_increment: f64 },
    #[error("weight sum Σν^-p does not converge at p = {p}")]
    Diverged { p: f64 },
    #[error("no domination fit found up to exponent {cap}")]
    NoFit { cap: f64 },
    #[error("tolerance {target:e} not met: best error budget {achieved:e}")]
    ToleranceNotMet { achieved: f64, target: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
