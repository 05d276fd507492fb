//! Closed-form deviation asymptotics for the sample quantile.
//!
//! With `q = F(x_p + t)` (upper) or `q = F(x_p - t)` (lower) the large
//! deviation rate is the Bernoulli Kullback-Leibler divergence
//!
//! ```text
//! Lambda(t) = p ln(p / q) + (1 - p) ln((1 - p) / (1 - q))
//! ```
//!
//! and the sharp (Bahadur-Rao) approximation is
//!
//! ```text
//! P ~ exp(-n Lambda) / (tau sigma_p sqrt(2 pi n)),  sigma_p = sqrt(p (1 - p)),
//! ```
//!
//! with `tau` the log-odds ratio between `q` and `p`. Because the underlying
//! count is integer valued, a lattice variant replacing `tau` by
//! `1 - exp(-tau)` is offered next to the plain one.
//!
//! The closed forms are checked against a numerical Fenchel-Legendre
//! transform of the centred indicator cumulants, maximized by golden section.

use serde::{Deserialize, Serialize};

use crate::distributions::{check_probability, DistributionSpec};
use crate::error::{Error, Result};
use crate::exact_oracle::{exact_tail_normalized, Boundary, QuantileProblem, Side};
use crate::optimize::{golden_section_max, golden_section_min};
use crate::probability::LogProbability;
use crate::special::{ln_normal_sf, LN_SQRT_2PI};

/// Upper end of the tilt bracket searched by [`fenchel_legendre_numeric`].
pub const LAMBDA_MAX: f64 = 50.0;
/// Bracket width at which the Legendre maximization stops.
pub const LAMBDA_TOL: f64 = 1e-10;
/// Clipping of the `y` bracket away from the log singularities at 0 and 1.
pub const Y_CLIP: f64 = 1e-12;
/// Agreement required between a numerical infimum and the closed form.
pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefactorMode {
    /// `1 / (tau sigma_p sqrt(2 pi n))`
    #[default]
    Paper,
    /// `1 / ((1 - e^{-tau}) sigma_p sqrt(2 pi n))`
    Lattice,
}

/// Assembled sharp large-deviation approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationExpansion {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub lambda: f64,
    pub tau: f64,
    pub sigma_p: f64,
    pub log_approx: f64,
    pub prefactor_mode: PrefactorMode,
}

impl DeviationExpansion {
    pub fn approx(&self) -> LogProbability {
        LogProbability::from_log(self.log_approx)
    }
}

/// Moderate-deviation rate `f(x_p)^2 r^2 / (2 p (1 - p))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpRate {
    pub rate: f64,
}

/// `a ln(a / b)` with the convention `0 ln 0 = 0`.
fn xlogx_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln()
    }
}

/// Bernoulli KL divergence with both complements supplied explicitly.
fn bernoulli_kl(y: f64, yc: f64, q: f64, qc: f64) -> f64 {
    xlogx_ratio(y, q) + xlogx_ratio(yc, qc)
}

/// The rate `Lambda^+(t)` (upper) or `Lambda^-(t)` (lower); `+inf` when the
/// offset leaves the support so that `q` is 0 or 1.
pub fn rate_lambda(problem: &QuantileProblem) -> f64 {
    if problem.t == 0.0 {
        return 0.0;
    }
    let (q, qc) = problem.q_pair();
    if q == problem.p {
        return 0.0;
    }
    bernoulli_kl(problem.p, 1.0 - problem.p, q, qc).max(0.0)
}

/// Log-odds tilt `tau_t^+` or `tau_t^-`. Zero at `t = 0`, where the sharp
/// expansion is unusable.
pub fn tilt_tau(problem: &QuantileProblem) -> Result<f64> {
    if problem.t == 0.0 {
        return Ok(0.0);
    }
    let (q, qc) = problem.q_pair();
    if q <= 0.0 || qc <= 0.0 {
        return Err(Error::InfiniteTilt { q });
    }
    let p = problem.p;
    let log_odds = (q / qc).ln() - (p / (1.0 - p)).ln();
    Ok(match problem.side {
        Side::Upper => log_odds,
        Side::Lower => -log_odds,
    })
}

/// Sharp large-deviation approximation of the exact tail of `problem`.
pub fn bahadur_rao_log(problem: &QuantileProblem, mode: PrefactorMode) -> Result<DeviationExpansion> {
    if !(problem.t > 0.0) {
        return Err(Error::ExpansionDomain("requires t > 0 (the tilt vanishes at t = 0)".into()));
    }
    let (q, qc) = problem.q_pair();
    if q <= 0.0 || qc <= 0.0 {
        return Err(Error::ExpansionDomain(format!(
            "F(x_p +/- t) = {q} is on the boundary; the offset leaves the support"
        )));
    }
    let tau = tilt_tau(problem)?;
    if !(tau > 0.0) {
        return Err(Error::ExpansionDomain(format!("non-positive tilt {tau}")));
    }
    let lambda = rate_lambda(problem);
    let sigma_p = problem.sigma_p();
    let tau_effective = match mode {
        PrefactorMode::Paper => tau,
        PrefactorMode::Lattice => -(-tau).exp_m1(),
    };
    let n = problem.n as f64;
    let log_approx = -n * lambda - (tau_effective.ln() + sigma_p.ln() + LN_SQRT_2PI + 0.5 * n.ln());
    Ok(DeviationExpansion { lambda, tau, sigma_p, log_approx, prefactor_mode: mode })
}

/// Standard normal upper tail `1 - Phi(t)` in the log domain.
pub fn normal_tail(t: f64) -> LogProbability {
    if t == f64::NEG_INFINITY {
        return LogProbability::ONE;
    }
    if t == f64::INFINITY {
        return LogProbability::ZERO;
    }
    LogProbability::from_log(ln_normal_sf(t))
}

/// `ln(P(+/- R_n >= t_r) / (1 - Phi(t_r)))`; `value` is `-inf` and
/// `exact_vanishes` is set when the exact tail is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CramerLogRatio {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub value: f64,
    pub exact_vanishes: bool,
}

pub fn cramer_log_ratio(
    dist: &DistributionSpec,
    p: f64,
    n: u64,
    t_r: f64,
    side: Side,
    boundary: Boundary,
) -> Result<CramerLogRatio> {
    let exact = exact_tail_normalized(dist, p, n, t_r, side, boundary)?;
    if exact.is_impossible() {
        return Ok(CramerLogRatio { value: f64::NEG_INFINITY, exact_vanishes: true });
    }
    Ok(CramerLogRatio {
        value: exact.log_value() - normal_tail(t_r).log_value(),
        exact_vanishes: false,
    })
}

pub fn mdp_rate(f_xp: f64, p: f64, r: f64) -> Result<MdpRate> {
    if !(f_xp > 0.0 && f_xp.is_finite()) {
        return Err(Error::InvalidParameter(format!("density at x_p must be positive, got {f_xp}")));
    }
    check_probability(p)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("r must be non-negative, got {r}")));
    }
    Ok(MdpRate { rate: f_xp * f_xp * r * r / (2.0 * p * (1.0 - p)) })
}

/// `y ln(y / q_ref) + (1 - y) ln((1 - y) / (1 - q_ref))`, with `0 ln 0 = 0`.
pub fn ldp_rate_star(y: f64, q_ref: f64) -> f64 {
    bernoulli_kl(y, 1.0 - y, q_ref, 1.0 - q_ref)
}

/// Cumulant `ln E exp(lambda U)` of `U = 1(X > x) - 1 + q`, `q = F(x)`.
pub fn upper_indicator_log_mgf(q: f64) -> impl Fn(f64) -> f64 {
    move |lambda: f64| lambda * q + (q * (-lambda).exp_m1()).ln_1p()
}

/// Cumulant `ln E exp(lambda V)` of `V = 1(X <= x) - q`, `q = F(x)`.
pub fn lower_indicator_log_mgf(q: f64) -> impl Fn(f64) -> f64 {
    move |lambda: f64| -lambda * q + (q * lambda.exp_m1()).ln_1p()
}

/// `sup_{0 <= lambda <= LAMBDA_MAX} { lambda y - log_mgf(lambda) }` by golden section.
pub fn fenchel_legendre_numeric<F>(log_mgf: F, y: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("Legendre argument must be non-negative, got {y}")));
    }
    let best = golden_section_max(|lambda| lambda * y - log_mgf(lambda), 0.0, LAMBDA_MAX, LAMBDA_TOL)?;
    Ok(best.value.max(0.0))
}

/// Numerical Legendre transform of the indicator cumulant behind `problem`,
/// which should reproduce [`rate_lambda`].
pub fn legendre_rate(problem: &QuantileProblem) -> Result<f64> {
    let q = problem.q();
    let p = problem.p;
    match problem.side {
        Side::Upper => fenchel_legendre_numeric(upper_indicator_log_mgf(q), q - p),
        Side::Lower => fenchel_legendre_numeric(lower_indicator_log_mgf(q), p - q),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    AsPrinted,
    Complement,
    Both,
    Neither,
}

/// Numerical audit of `Lambda(t) = inf_{y >= y_min} Lambda*(y)`.
///
/// `y_min` is `1 - p` on the upper side and `p` on the lower side. The
/// infimum is taken twice: with the reference probability `q = F(x_p +/- t)`
/// as written, and with its complement `1 - q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub inf_as_printed: f64,
    pub inf_complement_orientation: f64,
    pub closed_form: f64,
    pub as_printed_matches: bool,
    pub complement_matches: bool,
    pub matches: Orientation,
}

fn constrained_kl_inf(y_min: f64, q_ref: f64) -> Result<f64> {
    let lo = y_min.max(Y_CLIP);
    let hi = 1.0 - Y_CLIP;
    let searched = golden_section_min(|y| ldp_rate_star(y, q_ref), lo, hi, 1e-12)?.value;
    // The constrained minimum of a convex function sits either at the free
    // minimizer or on the boundary; both are available in closed form.
    let boundary = ldp_rate_star(y_min, q_ref);
    let free = if q_ref >= y_min { 0.0 } else { f64::INFINITY };
    Ok(searched.min(boundary).min(free))
}

pub fn verify_rate_identity(problem: &QuantileProblem) -> Result<IdentityReport> {
    verify_rate_identity_against(problem, rate_lambda(problem))
}

/// As [`verify_rate_identity`] but compared with a caller-supplied closed form.
pub fn verify_rate_identity_against(problem: &QuantileProblem, closed_form: f64) -> Result<IdentityReport> {
    let q = problem.q();
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("F(x_p +/- t) = {q} must lie strictly inside (0, 1)")));
    }
    let y_min = match problem.side {
        Side::Upper => 1.0 - problem.p,
        Side::Lower => problem.p,
    };
    let inf_as_printed = constrained_kl_inf(y_min, q)?;
    let inf_complement_orientation = constrained_kl_inf(y_min, 1.0 - q)?;
    let as_printed_matches = (inf_as_printed - closed_form).abs() <= IDENTITY_TOL;
    let complement_matches = (inf_complement_orientation - closed_form).abs() <= IDENTITY_TOL;
    let matches = match (as_printed_matches, complement_matches) {
        (true, true) => Orientation::Both,
        (true, false) => Orientation::AsPrinted,
        (false, true) => Orientation::Complement,
        (false, false) => Orientation::Neither,
    };
    Ok(IdentityReport {
        inf_as_printed,
        inf_complement_orientation,
        closed_form,
        as_printed_matches,
        complement_matches,
        matches,
    })
}
