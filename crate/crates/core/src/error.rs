use thiserror::Error;

/// Errors raised by the quantile-deviation toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate density: f(x_p) = {density} at p = {p}")]
    DegenerateDensity { p: f64, density: f64 },

    #[error("infinite tilt: F(x_p +/- t) = {q} lies on the boundary of [0, 1]")]
    InfiniteTilt { q: f64 },

    #[error("expansion undefined: {0}")]
    ExpansionDomain(String),

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("insufficient data: need at least {needed} finite rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
