//! Exact, asymptotic and simulated tail probabilities for sample quantiles.
//!
//! The exact law of the sample quantile reduces to binomial tails
//! ([`exact_oracle`]); [`deviations`] holds the closed-form large- and
//! moderate-deviation approximations together with a numerical
//! Fenchel-Legendre check; [`montecarlo`] simulates the statistic directly;
//! [`diagnostics`] confronts the approximations with the exact values.

// Reference constants keep their published digits; `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod binomial;
pub mod cli;
pub mod deviations;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod exact_oracle;
pub mod montecarlo;
pub mod optimize;
pub mod probability;
pub mod serde_ext;
pub mod special;

pub use binomial::{binomial_log_pmf, binomial_tail_log, TailSide};
pub use distributions::{DistributionSpec, Family, RegularityReport};
pub use error::{Error, Result};
pub use exact_oracle::{Boundary, QuantileProblem, Side};
pub use probability::LogProbability;
pub use deviations::{DeviationExpansion, PrefactorMode};
