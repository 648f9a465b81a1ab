use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KelvinError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("fixed point is not unique (unit eigenspace dimension {dim})")]
    NonUniqueFixedPoint { dim: usize },
    #[error("resonant denominator |ε²−Δ²| = {0:e}")]
    ResonantDenominator(f64),
    #[error("degenerate band: ε_M = ε_m")]
    DegenerateBand,
    #[error("steady state undefined: all rates vanish")]
    UndefinedSteadyState,
    #[error("no convergence rate: α = {0}")]
    NoConvergenceRate(f64),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("fit quality too poor (residual {residual:e})")]
    FitQuality { residual: f64 },
}

pub type Result<T> = std::result::Result<T, KelvinError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(KelvinError::Domain(msg.into()))
}
