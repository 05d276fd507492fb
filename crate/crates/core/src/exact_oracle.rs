//! Exact finite-n tail probabilities of the sample quantile.
//!
//! For a sample of size `n` from a continuous `F`, the number of observations
//! at or below `x` is `Bin(n, F(x))`. The events about the sample quantile
//! therefore reduce to binomial tails:
//!
//! ```text
//! P(x_{n,p} - x_p >= t) = P(p >= F_n(x_p + t)) = P(Bin(n, F(x_p + t)) <= floor(np))
//! P(x_{n,p} - x_p <= -t) = P(p <= F_n(x_p - t)) = P(Bin(n, F(x_p - t)) >= ceil(np))
//! ```
//!
//! Both are evaluated in the log domain. With [`Boundary::Inclusive`] (the
//! default) the term `Bin = np` is kept on both sides when `np` is an
//! integer, following the non-strict inequalities above. [`Boundary::Strict`]
//! drops it. Note that the order-statistic law of `x_{n,p}` itself is the
//! strict form on the upper side and the inclusive form on the lower side;
//! the two conventions only differ when `np` is an integer.

use serde::{Deserialize, Serialize};

use crate::binomial::{tail_log_pq, TailSide};
use crate::distributions::{check_probability, DistributionSpec};
use crate::error::{Error, Result};
use crate::probability::LogProbability;

/// Direction of the deviation `x_{n,p} - x_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x_{n,p} - x_p >= t`
    Upper,
    /// `x_{n,p} - x_p <= -t`
    Lower,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Upper, Side::Lower];

    pub fn name(self) -> &'static str {
        match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        }
    }
}

/// Treatment of the binomial term `Bin = np` when `np` is an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `Bin <= floor(np)` (upper) and `Bin >= ceil(np)` (lower).
    #[default]
    Inclusive,
    /// `Bin < np` (upper) and `Bin > np` (lower).
    Strict,
}

/// `floor(np)`, `ceil(np)` and whether `np` is an integer, tolerant of the
/// representation error in `p` (e.g. `10 * 0.7`).
pub fn np_bounds(n: u64, p: f64) -> (i64, i64, bool) {
    let np = n as f64 * p;
    let nearest = np.round();
    if (np - nearest).abs() <= 8.0 * f64::EPSILON * np.max(1.0) {
        let r = nearest as i64;
        (r, r, true)
    } else {
        (np.floor() as i64, np.ceil() as i64, false)
    }
}

/// Rank of the sample p-quantile among `n` order statistics (1-based).
pub fn quantile_rank(n: u64, p: f64) -> usize {
    let (_, ceil, _) = np_bounds(n, p);
    ceil.max(1) as usize
}

/// One deviation question about the sample quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileProblem {
    pub dist: DistributionSpec,
    pub p: f64,
    pub n: u64,
    pub t: f64,
    pub side: Side,
}

impl QuantileProblem {
    pub fn new(dist: DistributionSpec, p: f64, n: u64, t: f64, side: Side) -> Result<Self> {
        check_probability(p)?;
        if n == 0 {
            return Err(Error::Domain("sample size n must be at least 1".into()));
        }
        if !(t >= 0.0) || t.is_infinite() {
            return Err(Error::Domain(format!("offset t must be finite and non-negative, got {t}")));
        }
        Ok(Self { dist, p, n, t, side })
    }

    pub fn with_n(&self, n: u64) -> Result<Self> {
        Self::new(self.dist, self.p, n, self.t, self.side)
    }

    pub fn with_t(&self, t: f64) -> Result<Self> {
        Self::new(self.dist, self.p, self.n, t, self.side)
    }

    pub fn with_side(&self, side: Side) -> Self {
        Self { side, ..*self }
    }

    /// Population quantile `x_p`.
    pub fn x_p(&self) -> f64 {
        self.dist.quantile(self.p).expect("p validated on construction")
    }

    /// Threshold `x_p + t` (upper) or `x_p - t` (lower).
    pub fn threshold(&self) -> f64 {
        match self.side {
            Side::Upper => self.x_p() + self.t,
            Side::Lower => self.x_p() - self.t,
        }
    }

    /// `F(x_p +/- t)` for the problem's side.
    pub fn q(&self) -> f64 {
        self.q_pair().0
    }

    /// `(F(x), 1 - F(x))` at the threshold, each computed directly.
    pub fn q_pair(&self) -> (f64, f64) {
        let x = self.threshold();
        (self.dist.cdf(x), self.dist.sf(x))
    }

    pub fn sigma_p(&self) -> f64 {
        (self.p * (1.0 - self.p)).sqrt()
    }
}

/// Sample p-quantile `inf{x : F_n(x) >= p}`, i.e. the `ceil(np)`-th order
/// statistic, found by expected linear-time selection.
pub fn sample_quantile_from_data(data: &[f64], p: f64) -> Result<f64> {
    check_probability(p)?;
    if data.is_empty() {
        return Err(Error::Domain("cannot take a quantile of empty data".into()));
    }
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("data must be finite, found {bad}")));
    }
    let mut work = data.to_vec();
    Ok(select_rank(&mut work, quantile_rank(data.len() as u64, p)))
}

/// The `rank`-th smallest element (1-based); reorders `work`.
pub(crate) fn select_rank(work: &mut [f64], rank: usize) -> f64 {
    let (_, v, _) = work.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// Binomial threshold and tail direction encoding the problem's event.
fn event_bounds(n: u64, p: f64, side: Side, boundary: Boundary) -> (i64, TailSide) {
    let (floor, ceil, integer) = np_bounds(n, p);
    match (side, boundary) {
        (Side::Upper, Boundary::Inclusive) => (floor, TailSide::AtMost),
        (Side::Upper, Boundary::Strict) => (if integer { floor - 1 } else { floor }, TailSide::AtMost),
        (Side::Lower, Boundary::Inclusive) => (ceil, TailSide::AtLeast),
        (Side::Lower, Boundary::Strict) => (if integer { ceil + 1 } else { ceil }, TailSide::AtLeast),
    }
}

/// Exact `P(x_{n,p} - x_p >= t)` or `P(x_{n,p} - x_p <= -t)`, inclusive boundary.
pub fn exact_tail(problem: &QuantileProblem) -> LogProbability {
    exact_tail_with(problem, Boundary::Inclusive)
}

pub fn exact_tail_with(problem: &QuantileProblem, boundary: Boundary) -> LogProbability {
    let (q, qc) = problem.q_pair();
    let (k, tail) = event_bounds(problem.n, problem.p, problem.side, boundary);
    LogProbability::from_log(tail_log_pq(problem.n, q, qc, k, tail))
}

/// Raw-scale offset per unit of the normalized statistic
/// `R_n = sqrt(n) f(x_p) (x_{n,p} - x_p) / sqrt(p(1-p))`.
pub fn r_scale(dist: &DistributionSpec, p: f64, n: u64) -> Result<f64> {
    let x_p = dist.quantile(p)?;
    let density = dist.pdf(x_p);
    if !(density > 0.0) {
        return Err(Error::DegenerateDensity { p, density });
    }
    if n == 0 {
        return Err(Error::Domain("sample size n must be at least 1".into()));
    }
    Ok((p * (1.0 - p)).sqrt() / ((n as f64).sqrt() * density))
}

/// Exact `P(+/- R_n >= t_r)`.
pub fn exact_tail_normalized(
    dist: &DistributionSpec,
    p: f64,
    n: u64,
    t_r: f64,
    side: Side,
    boundary: Boundary,
) -> Result<LogProbability> {
    if !(t_r >= 0.0) {
        return Err(Error::Domain(format!("normalized offset must be non-negative, got {t_r}")));
    }
    let t = t_r * r_scale(dist, p, n)?;
    let problem = QuantileProblem::new(*dist, p, n, t, side)?;
    Ok(exact_tail_with(&problem, boundary))
}

/// `P(x_{n,p} <= x) = P(Bin(n, F(x)) >= ceil(np))`.
pub fn sample_quantile_cdf(dist: &DistributionSpec, p: f64, n: u64, x: f64) -> Result<LogProbability> {
    check_probability(p)?;
    if n == 0 {
        return Err(Error::Domain("sample size n must be at least 1".into()));
    }
    let (_, ceil, _) = np_bounds(n, p);
    let log = tail_log_pq(n, dist.cdf(x), dist.sf(x), ceil, TailSide::AtLeast);
    Ok(LogProbability::from_log(log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;

    fn uniform() -> DistributionSpec {
        DistributionSpec::standard(Family::Uniform)
    }

    #[test]
    fn sample_quantile_examples() {
        assert_eq!(sample_quantile_from_data(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        assert_eq!(sample_quantile_from_data(&[5.0], 0.9).unwrap(), 5.0);
        assert_eq!(sample_quantile_from_data(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert!(sample_quantile_from_data(&[], 0.5).is_err());
        assert!(sample_quantile_from_data(&[1.0, f64::NAN], 0.5).is_err());
        assert!(sample_quantile_from_data(&[1.0], 1.0).is_err());
    }

    #[test]
    fn sample_quantile_matches_inf_definition() {
        let data = [0.4, -1.0, 2.5, 0.4, 7.0, 3.3, -0.2];
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let fn_at = |x: f64| data.iter().filter(|&&v| v <= x).count() as f64 / data.len() as f64;
            let mut sorted = data.to_vec();
            sorted.sort_by(f64::total_cmp);
            let inf = *sorted.iter().find(|&&x| fn_at(x) >= p).unwrap();
            assert_eq!(sample_quantile_from_data(&data, p).unwrap(), inf, "p={p}");
        }
    }

    #[test]
    fn np_bounds_snap_representation_error() {
        assert_eq!(np_bounds(10, 0.7), (7, 7, true));
        assert_eq!(np_bounds(5, 0.5), (2, 3, false));
        assert_eq!(np_bounds(3, 0.1), (0, 1, false));
        assert_eq!(quantile_rank(3, 0.1), 1);
        assert_eq!(quantile_rank(100, 0.29), 29);
    }

    #[test]
    fn exact_tail_examples() {
        let prob = QuantileProblem::new(uniform(), 0.5, 5, 0.2, Side::Upper).unwrap();
        assert!((exact_tail(&prob).value() - 0.16308).abs() < 1e-12);

        let far = QuantileProblem::new(uniform(), 0.5, 10, 0.6, Side::Upper).unwrap();
        assert!(exact_tail(&far).is_impossible());
        assert!(exact_tail(&far.with_side(Side::Lower)).is_impossible());
    }

    #[test]
    fn normalized_examples() {
        let d = uniform();
        let at_zero = exact_tail_normalized(&d, 0.5, 5, 0.0, Side::Upper, Boundary::Inclusive).unwrap();
        let direct = exact_tail(&QuantileProblem::new(d, 0.5, 5, 0.0, Side::Upper).unwrap());
        assert_eq!(at_zero, direct);

        assert!((r_scale(&d, 0.5, 100).unwrap() - 0.05).abs() < 1e-17);

        let t_r = 0.2 * 5f64.sqrt() / 0.5;
        let p = exact_tail_normalized(&d, 0.5, 5, t_r, Side::Upper, Boundary::Inclusive).unwrap();
        assert!((p.value() - 0.16308).abs() < 1e-12);
    }

    #[test]
    fn normalized_rejects_bad_input() {
        assert!(r_scale(&uniform(), 0.5, 0).is_err());
        assert!(r_scale(&uniform(), 1.0, 10).is_err());
        assert!(exact_tail_normalized(&uniform(), 0.5, 5, -1.0, Side::Upper, Boundary::Inclusive).is_err());
    }

    #[test]
    fn sample_quantile_cdf_examples() {
        let d = uniform();
        assert!(sample_quantile_cdf(&d, 0.5, 7, f64::NEG_INFINITY).unwrap().is_impossible());
        assert_eq!(sample_quantile_cdf(&d, 0.5, 7, f64::INFINITY).unwrap().value(), 1.0);
        assert!((sample_quantile_cdf(&d, 0.5, 1, 0.3).unwrap().value() - 0.3).abs() < 1e-15);
        assert!((sample_quantile_cdf(&d, 0.5, 5, 0.7).unwrap().value() - 0.83692).abs() < 1e-12);
    }

    #[test]
    fn boundary_flag_changes_one_pmf_term_at_integer_np() {
        let d = DistributionSpec::standard(Family::Normal);
        let prob = QuantileProblem::new(d, 0.5, 10, 0.3, Side::Upper).unwrap();
        let (q, _) = prob.q_pair();
        let inc = exact_tail_with(&prob, Boundary::Inclusive).value();
        let strict = exact_tail_with(&prob, Boundary::Strict).value();
        let pmf = crate::binomial::binomial_log_pmf(10, 5, q).exp();
        assert!((inc - strict - pmf).abs() < 1e-15);

        let lower = prob.with_side(Side::Lower);
        let (ql, _) = lower.q_pair();
        let inc = exact_tail_with(&lower, Boundary::Inclusive).value();
        let strict = exact_tail_with(&lower, Boundary::Strict).value();
        let pmf = crate::binomial::binomial_log_pmf(10, 5, ql).exp();
        assert!((inc - strict - pmf).abs() < 1e-15);

        // Non-integer np: the conventions coincide.
        let odd = prob.with_n(11).unwrap();
        assert_eq!(exact_tail_with(&odd, Boundary::Inclusive), exact_tail_with(&odd, Boundary::Strict));
    }

    #[test]
    fn upper_tail_agrees_with_order_statistic_cdf() {
        for family in Family::ALL {
            let d = DistributionSpec::standard(family);
            for (n, p) in [(7u64, 0.5), (33, 0.1), (151, 0.9), (41, 0.37)] {
                for t in [0.0, 0.05, 0.2, 0.7] {
                    let prob = QuantileProblem::new(d, p, n, t, Side::Upper).unwrap();
                    let via_tail = exact_tail(&prob).value();
                    let via_cdf = sample_quantile_cdf(&d, p, n, prob.threshold()).unwrap().complement().value();
                    assert!((via_tail - via_cdf).abs() <= 1e-12, "{d} n={n} p={p} t={t}");
                }
            }
        }
    }

    #[test]
    fn monotone_in_t_and_x() {
        let d = DistributionSpec::standard(Family::Logistic);
        let base = QuantileProblem::new(d, 0.3, 60, 0.0, Side::Upper).unwrap();
        let mut prev = 1.0;
        for i in 0..60 {
            let v = exact_tail(&base.with_t(i as f64 * 0.1).unwrap()).value();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        let mut prev = 0.0;
        for i in -50..50 {
            let v = sample_quantile_cdf(&d, 0.3, 60, i as f64 * 0.1).unwrap().value();
            assert!(v + 1e-15 >= prev);
            prev = v;
        }
    }

    #[test]
    fn problem_validation() {
        let d = uniform();
        assert!(QuantileProblem::new(d, 0.0, 5, 0.1, Side::Upper).is_err());
        assert!(QuantileProblem::new(d, 0.5, 0, 0.1, Side::Upper).is_err());
        assert!(QuantileProblem::new(d, 0.5, 5, -0.1, Side::Upper).is_err());
        assert!(QuantileProblem::new(d, 0.5, 5, f64::NAN, Side::Upper).is_err());
    }
}
