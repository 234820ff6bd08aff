use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or input lies outside the domain the operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// The stationary cubic lost its leading term.
    #[error("degenerate polynomial: {0}")]
    Degenerate(String),

    /// Newton polishing of a polynomial root did not reach tolerance.
    #[error("root polishing did not converge (residual {residual:e})")]
    Convergence { residual: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    /// The Bernoulli denominator vanishes inside the grid. `valid_nodes`
    /// counts the leading nodes that were computed before the pole.
    #[error("pole at t = {t}")]
    Pole { t: f64, valid_nodes: usize },

    #[error("system is not homogeneous: {0}")]
    NotHomogeneous(String),

    /// The square-root argument jumped across the branch cut between
    /// adjacent nodes.
    #[error("branch discontinuity near t = {t}")]
    Branch { t: f64 },

    #[error("solution magnitude exceeded {limit:e} at t = {t}")]
    BlowUp { t: f64, limit: f64 },

    /// The proportional reduction is not available for this system.
    #[error("proportional reduction unavailable: {0}")]
    ConditionFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
