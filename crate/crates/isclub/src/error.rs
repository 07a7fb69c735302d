use thiserror::Error;

/// Errors produced by model construction, solvers and spec loading.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Supply aggregation over a subset with no payload mass is undefined.
    #[error("no supply mass")]
    NoSupplyMass,

    #[error("empty peer subset")]
    EmptySubset,

    /// Shift magnitude leaves no overlap between supply and demand support.
    #[error("empty overlap: |delta| = {delta} must be smaller than s_max = {s_max}")]
    EmptyOverlap { delta: i64, s_max: usize },

    /// p-rank demand mass sits where the coupling marginal vanishes.
    #[error("undefined conversion: demand mass at p-rank {rank} where f(r) = 0")]
    UndefinedConversion { rank: usize },

    #[error("solver failure: {detail} (residual {residual:e})")]
    SolverFailure { detail: String, residual: f64 },

    #[error("no critical population below bound n = {ceiling:e}")]
    NoCriticalPopulation { ceiling: f64 },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
