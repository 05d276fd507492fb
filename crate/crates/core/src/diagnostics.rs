//! Convergence diagnostics against the exact oracle.
//!
//! Every table here is deterministic: values come from the exact binomial
//! oracle and the closed forms of [`crate::deviations`], never from
//! simulation. Rows are computed in parallel and assembled in key order.
//!
//! Tolerance constants used by callers of these tables (for instance the
//! `+10` slack in `(ln n + 10) / n`, or the envelope budget of 5) are
//! engineering budgets of this crate, not constants of any theorem.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deviations::{
    bahadur_rao_log, cramer_log_ratio, legendre_rate, mdp_rate, normal_tail, rate_lambda,
    verify_rate_identity_against, IDENTITY_TOL, PrefactorMode,
};
use crate::distributions::{check_probability, DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::exact_oracle::{
    exact_tail, exact_tail_normalized, np_bounds, r_scale, sample_quantile_cdf, Boundary, QuantileProblem, Side,
};
use crate::special::normal_cdf;

/// Points per `t` grid in the Cramér envelope and `p_n` sweeps.
pub const ENVELOPE_T_POINTS: usize = 21;
/// Default density of the Berry-Esseen grid on `[-BE_RANGE, BE_RANGE]`.
pub const BE_GRID_POINTS: usize = 4001;
pub const BE_RANGE: f64 = 8.0;
const BE_REFINE_POINTS: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Geo,
    Lin,
}

/// Grid written as `start:end:geo|lin:count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub scale: GridScale,
    pub count: usize,
}

impl GridSpec {
    pub fn new(start: f64, end: f64, scale: GridScale, count: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start <= end) {
            return Err(Error::Parse(format!("grid needs finite start <= end, got {start}:{end}")));
        }
        if count == 0 {
            return Err(Error::Parse("grid count must be at least 1".into()));
        }
        if count == 1 && start != end {
            return Err(Error::Parse("a one-point grid needs start == end".into()));
        }
        if scale == GridScale::Geo && start <= 0.0 {
            return Err(Error::Parse(format!("geometric grid needs start > 0, got {start}")));
        }
        Ok(Self { start, end, scale, count })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    return self.end;
                }
                let frac = i as f64 / last;
                match self.scale {
                    GridScale::Lin => self.start + frac * (self.end - self.start),
                    GridScale::Geo => self.start * (self.end / self.start).powf(frac),
                }
            })
            .collect()
    }

    /// Grid points rounded to sample sizes, deduplicated.
    pub fn sample_sizes(&self) -> Result<Vec<u64>> {
        let mut sizes = Vec::with_capacity(self.count);
        for x in self.points() {
            let n = x.round();
            if !(n >= 1.0) {
                return Err(Error::Parse(format!("grid point {x} is not a valid sample size")));
            }
            sizes.push(n as u64);
        }
        sizes.dedup();
        Ok(sizes)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self.scale {
            GridScale::Geo => "geo",
            GridScale::Lin => "lin",
        };
        write!(f, "{}:{}:{}:{}", self.start, self.end, scale, self.count)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [start, end, scale, count] = parts[..] else {
            return Err(Error::Parse(format!("expected start:end:geo|lin:count, got {s:?}")));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad grid number {v:?}")));
        let scale = match scale {
            "geo" => GridScale::Geo,
            "lin" => GridScale::Lin,
            other => return Err(Error::Parse(format!("grid scale must be geo or lin, got {other:?}"))),
        };
        let count = count.parse().map_err(|_| Error::Parse(format!("bad grid count {count:?}")))?;
        GridSpec::new(num(start)?, num(end)?, scale, count)
    }
}

/// One row of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub exact_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub br_paper_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub br_lattice_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub normal_log: f64,
    /// `ln(exact / (1 - Phi(t_R)))`
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub cramer_ratio: f64,
    /// `-(1/n) ln(exact)`
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub ldp_exponent: f64,
    /// exact / approximation, linear domain
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub ratio_paper: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub ratio_lattice: f64,
    /// Prefactor mode with the smaller `|ln(exact / approx)|`.
    pub winner: Option<PrefactorMode>,
    /// Fractional part of `np`; the lattice boundary sits `np_fraction` below `np`.
    pub np_fraction: f64,
}

/// Fixed CSV layout of a sweep.
#[derive(Serialize)]
struct SweepCsvRow {
    key: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    exact_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    br_paper_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    br_lattice_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    normal_log: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    cramer_ratio: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    ldp_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub description: String,
    pub grid: String,
    pub key_name: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<SweepCsvRow> = self
            .rows
            .iter()
            .map(|r| SweepCsvRow {
                key: r.key,
                exact_log: r.exact_log,
                br_paper_log: r.br_paper_log,
                br_lattice_log: r.br_lattice_log,
                normal_log: r.normal_log,
                cramer_ratio: r.cramer_ratio,
                ldp_exponent: r.ldp_exponent,
            })
            .collect();
        to_csv(&rows)
    }
}

/// Serializes rows as CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Output(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Output(e.to_string()))
}

fn sorted_sizes(n_grid: &[u64]) -> Result<Vec<u64>> {
    let mut sizes = n_grid.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if sizes[0] == 0 {
        return Err(Error::Domain("sample sizes must be at least 1".into()));
    }
    Ok(sizes)
}

fn describe(problem: &QuantileProblem) -> String {
    format!("dist={} p={} t={} side={}", problem.dist, problem.p, problem.t, problem.side.name())
}

fn np_fraction(n: u64, p: f64) -> f64 {
    let (floor, _, integer) = np_bounds(n, p);
    if integer {
        0.0
    } else {
        n as f64 * p - floor as f64
    }
}

fn convergence_row(template: &QuantileProblem, n: u64) -> Result<SweepRow> {
    let problem = template.with_n(n)?;
    let exact_log = exact_tail(&problem).log_value();
    let br_paper_log = bahadur_rao_log(&problem, PrefactorMode::Paper)?.log_approx;
    let br_lattice_log = bahadur_rao_log(&problem, PrefactorMode::Lattice)?.log_approx;
    let t_r = problem.t / r_scale(&problem.dist, problem.p, n)?;
    let normal_log = normal_tail(t_r).log_value();
    let cramer_ratio = if exact_log == f64::NEG_INFINITY { f64::NEG_INFINITY } else { exact_log - normal_log };
    let gap_paper = exact_log - br_paper_log;
    let gap_lattice = exact_log - br_lattice_log;
    let winner = if gap_paper.is_nan() || gap_lattice.is_nan() || gap_paper.is_infinite() {
        None
    } else if gap_lattice.abs() <= gap_paper.abs() {
        Some(PrefactorMode::Lattice)
    } else {
        Some(PrefactorMode::Paper)
    };
    Ok(SweepRow {
        key: n as f64,
        exact_log,
        br_paper_log,
        br_lattice_log,
        normal_log,
        cramer_ratio,
        ldp_exponent: -exact_log / n as f64,
        ratio_paper: gap_paper.exp(),
        ratio_lattice: gap_lattice.exp(),
        winner,
        np_fraction: np_fraction(n, problem.p),
    })
}

/// Exact tail alongside every approximation, one row per `n`.
pub fn convergence_sweep(template: &QuantileProblem, n_grid: &[u64]) -> Result<SweepTable> {
    if !(template.t > 0.0) {
        return Err(Error::ExpansionDomain("convergence sweeps need t > 0".into()));
    }
    let sizes = sorted_sizes(n_grid)?;
    let rows = sizes
        .par_iter()
        .map(|&n| convergence_row(template, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        description: describe(template),
        grid: format!("{sizes:?}"),
        key_name: "n".into(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rows_used: usize,
}

/// Least-squares line through `(key, exact_log)` over the finite rows.
pub fn fit_exponent(table: &SweepTable) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.key.is_finite() && r.exact_log.is_finite())
        .map(|r| (r.key, r.exact_log))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: pts.len() });
    }
    let m = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 3, got: 1 });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(ExponentFit { slope, intercept, r_squared, rows_used: pts.len() })
}

/// `|ln(exact / (1 - Phi(t)))|` scaled by `sqrt(m) / (1 + t^3)` at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub n: u64,
    pub p: f64,
    pub side: Side,
    pub t_r: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub cramer_ratio: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerEnvelope {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub constant: f64,
    pub points: Vec<EnvelopePoint>,
}

impl CramerEnvelope {
    fn from_points(points: Vec<EnvelopePoint>) -> Self {
        let constant = points.iter().map(|e| e.scaled).fold(0.0, f64::max);
        Self { constant, points }
    }

    /// Largest scaled value at one sample size.
    pub fn constant_at(&self, n: u64) -> f64 {
        self.points.iter().filter(|e| e.n == n).map(|e| e.scaled).fold(0.0, f64::max)
    }
}

/// `count` equally spaced points on `[0, t_max]`; a single point is `t = 0`.
fn t_grid(t_max: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count).map(|j| t_max * j as f64 / (count - 1) as f64).collect()
}

fn envelope_points(
    dist: &DistributionSpec,
    p: f64,
    n: u64,
    effective: f64,
    t_points: usize,
    sides: &[Side],
) -> Result<Vec<EnvelopePoint>> {
    let grid = t_grid(effective.powf(1.0 / 6.0), t_points);
    let jobs: Vec<(Side, f64)> = sides.iter().flat_map(|&s| grid.iter().map(move |&t| (s, t))).collect();
    jobs.par_iter()
        .map(|&(side, t_r)| {
            let ratio = cramer_log_ratio(dist, p, n, t_r, side, Boundary::Inclusive)?.value;
            Ok(EnvelopePoint {
                n,
                p,
                side,
                t_r,
                cramer_ratio: ratio,
                scaled: ratio.abs() * effective.sqrt() / (1.0 + t_r.powi(3)),
            })
        })
        .collect()
}

/// Envelope constant `max |ln(exact / (1 - Phi(t)))| sqrt(n) / (1 + t^3)` over
/// `t in [0, n^{1/6}]` and all `n` in the grid.
pub fn cramer_envelope_fit(
    dist: &DistributionSpec,
    p: f64,
    n_grid: &[u64],
    t_points: usize,
    sides: &[Side],
) -> Result<CramerEnvelope> {
    check_probability(p)?;
    let mut points = Vec::new();
    for n in sorted_sizes(n_grid)? {
        points.extend(envelope_points(dist, p, n, n as f64, t_points, sides)?);
    }
    Ok(CramerEnvelope::from_points(points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnSweep {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub constant: f64,
    pub warning: Option<String>,
    pub points: Vec<EnvelopePoint>,
}

/// Envelope constant with a moving probability `p_n = p0 n^{-beta}`, scaled by
/// `sqrt(n p_n (1 - p_n))` over `t in [0, (n p_n (1 - p_n))^{1/6}]`.
pub fn pn_sweep(
    dist: &DistributionSpec,
    p0: f64,
    beta: f64,
    n_grid: &[u64],
    t_points: usize,
    sides: &[Side],
) -> Result<PnSweep> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::Domain(format!("p0 must lie in (0, 1], got {p0}")));
    }
    let warning = (!dist.is_everywhere_regular()).then(|| {
        format!(
            "hypotheses not met: {} has no positive density with bounded derivative on the whole line",
            dist.family().name()
        )
    });
    let mut points = Vec::new();
    for n in sorted_sizes(n_grid)? {
        let p_n = p0 * (n as f64).powf(-beta);
        check_probability(p_n)?;
        let effective = n as f64 * p_n * (1.0 - p_n);
        points.extend(envelope_points(dist, p_n, n, effective, t_points, sides)?);
    }
    let envelope = CramerEnvelope::from_points(points);
    Ok(PnSweep { constant: envelope.constant, warning, points: envelope.points })
}

/// Grid estimate of `sup_t |P(R_n <= t) - Phi(t)|`.
///
/// `sup_diff` is attained on the evaluated points, so it never exceeds the
/// true supremum. `upper_bound` uses monotonicity of both CDFs on each grid
/// cell, plus the tails beyond the grid, and is a certified upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseen {
    pub n: u64,
    pub sup_diff: f64,
    pub scaled: f64,
    pub argmax_t: f64,
    pub upper_bound: f64,
    pub grid_modulus: f64,
}

pub fn berry_esseen_sup(dist: &DistributionSpec, p: f64, n: u64, grid_points: usize) -> Result<BerryEsseen> {
    if grid_points < 2 {
        return Err(Error::Domain("Berry-Esseen grid needs at least 2 points".into()));
    }
    let x_p = dist.quantile(p)?;
    let scale = r_scale(dist, p, n)?;
    let cdf_r = |t: f64| -> Result<f64> { Ok(sample_quantile_cdf(dist, p, n, x_p + t * scale)?.value()) };

    let step = 2.0 * BE_RANGE / (grid_points - 1) as f64;
    let ts: Vec<f64> = (0..grid_points).map(|i| -BE_RANGE + 2.0 * BE_RANGE * i as f64 / (grid_points - 1) as f64).collect();
    let fs = ts.par_iter().map(|&t| cdf_r(t)).collect::<Result<Vec<f64>>>()?;
    let phis: Vec<f64> = ts.iter().map(|&t| normal_cdf(t)).collect();

    let (mut sup_diff, mut argmax_t) = (0.0f64, 0.0f64);
    for i in 0..grid_points {
        let d = (fs[i] - phis[i]).abs();
        if d > sup_diff {
            sup_diff = d;
            argmax_t = ts[i];
        }
    }

    let mut upper_bound = fs[0].max(phis[0]).max((1.0 - fs[grid_points - 1]).max(1.0 - phis[grid_points - 1]));
    for i in 0..grid_points - 1 {
        let cell = (fs[i + 1] - phis[i]).max(phis[i + 1] - fs[i]);
        upper_bound = upper_bound.max(cell);
    }

    let (lo, hi) = ((argmax_t - step).max(-BE_RANGE), (argmax_t + step).min(BE_RANGE));
    let refined = (0..BE_REFINE_POINTS)
        .into_par_iter()
        .map(|j| {
            let t = lo + (hi - lo) * j as f64 / (BE_REFINE_POINTS - 1) as f64;
            Ok((t, (cdf_r(t)? - normal_cdf(t)).abs()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    for (t, d) in refined {
        if d > sup_diff {
            sup_diff = d;
            argmax_t = t;
        }
    }
    let upper_bound = upper_bound.max(sup_diff);
    Ok(BerryEsseen {
        n,
        sup_diff,
        scaled: sup_diff * (n as f64).sqrt(),
        argmax_t,
        upper_bound,
        grid_modulus: upper_bound - sup_diff,
    })
}

/// Moderate-deviation row at speed `a_n = n^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpRow {
    pub n: u64,
    pub a_n: f64,
    /// `(1 / a_n^2) ln P(+/- R_n >= a_n r)`
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub normalized: f64,
    /// Limit on the normalized scale, `-r^2 / 2`.
    pub target: f64,
    /// `(1 / a_n^2) ln P(+/-(x_{n,p} - x_p) >= a_n r / sqrt(n))`
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub raw_normalized: f64,
    /// Limit on the raw scale, `-f(x_p)^2 r^2 / (2 p (1 - p))`.
    pub raw_target: f64,
}

pub fn mdp_sweep(dist: &DistributionSpec, p: f64, r: f64, alpha: f64, n_grid: &[u64], side: Side) -> Result<Vec<MdpRow>> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("r must be non-negative, got {r}")));
    }
    let f_xp = dist.pdf(dist.quantile(p)?);
    let raw_target = -mdp_rate(f_xp, p, r)?.rate;
    let sizes = sorted_sizes(n_grid)?;
    sizes
        .par_iter()
        .map(|&n| {
            let a_n = (n as f64).powf(alpha);
            let a2 = a_n * a_n;
            let normalized = exact_tail_normalized(dist, p, n, a_n * r, side, Boundary::Inclusive)?.log_value() / a2;
            let raw = QuantileProblem::new(*dist, p, n, a_n * r / (n as f64).sqrt(), side)?;
            Ok(MdpRow {
                n,
                a_n,
                normalized,
                target: -0.5 * r * r,
                raw_normalized: exact_tail(&raw).log_value() / a2,
                raw_target,
            })
        })
        .collect()
}

/// Offsets probed by the verification battery: ten equally spaced values up
/// to 1, shrunk to stay inside a bounded support.
pub fn battery_offsets(dist: &DistributionSpec, p: f64, side: Side) -> Result<Vec<f64>> {
    let x_p = dist.quantile(p)?;
    let (lo, hi) = dist.support();
    let room = match side {
        Side::Upper => hi - x_p,
        Side::Lower => x_p - lo,
    };
    let reach = (0.95 * room).min(1.0);
    Ok((1..=10).map(|j| reach * j as f64 / 10.0).collect())
}

pub const BATTERY_PROBABILITIES: [f64; 3] = [0.1, 0.5, 0.9];

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for VerifyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Legendre duality and the rate-identity audit over the builtin families.
///
/// The closed-form rate is multiplied by `1 + rate_perturbation` before the
/// comparisons; any nonzero perturbation above the tolerance must fail.
pub fn verification_battery(rate_perturbation: f64) -> Result<Vec<VerifyCheck>> {
    let mut groups = Vec::new();
    for family in Family::ALL {
        for p in BATTERY_PROBABILITIES {
            for side in Side::BOTH {
                groups.push((DistributionSpec::standard(family), p, side));
            }
        }
    }
    let per_group = groups
        .par_iter()
        .map(|&(dist, p, side)| battery_group(dist, p, side, rate_perturbation))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_group.into_iter().flatten().collect())
}

fn battery_group(dist: DistributionSpec, p: f64, side: Side, perturbation: f64) -> Result<[VerifyCheck; 2]> {
    let label = format!("{dist} p={p} {}", side.name());
    let mut duality_err = 0.0f64;
    let (mut printed_gap, mut complement_gap) = (0.0f64, 0.0f64);
    let (mut printed_all, mut complement_all, mut identity_ok) = (true, true, true);
    for t in battery_offsets(&dist, p, side)? {
        let problem = QuantileProblem::new(dist, p, 1, t, side)?;
        let closed = rate_lambda(&problem) * (1.0 + perturbation);
        duality_err = duality_err.max((legendre_rate(&problem)? - closed).abs());
        let report = verify_rate_identity_against(&problem, closed)?;
        printed_gap = printed_gap.max((report.inf_as_printed - closed).abs());
        complement_gap = complement_gap.max((report.inf_complement_orientation - closed).abs());
        printed_all &= report.as_printed_matches;
        complement_all &= report.complement_matches;
        identity_ok &= report.as_printed_matches || report.complement_matches;
    }
    let verdict = |ok: bool| if ok { "matches" } else { "mismatch" };
    Ok([
        VerifyCheck {
            name: format!("legendre-duality {label}"),
            passed: duality_err <= IDENTITY_TOL,
            detail: format!("max |numeric - closed form| = {duality_err:.3e} (tol {IDENTITY_TOL:e})"),
        },
        VerifyCheck {
            name: format!("rate-identity {label}"),
            passed: identity_ok,
            detail: format!(
                "as printed {} (max gap {printed_gap:.3e}); complement orientation {} (max gap {complement_gap:.3e})",
                verdict(printed_all),
                verdict(complement_all)
            ),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deviations::cramer_log_ratio;

    const LAMBDA_REF: f64 = 0.08717669357238887635;

    fn uniform() -> DistributionSpec {
        DistributionSpec::standard(Family::Uniform)
    }

    fn uniform_template() -> QuantileProblem {
        QuantileProblem::new(uniform(), 0.5, 1, 0.2, Side::Upper).unwrap()
    }

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "100:100000:geo:10".parse().unwrap();
        let sizes = g.sample_sizes().unwrap();
        assert_eq!(sizes.len(), 10);
        assert_eq!(sizes[0], 100);
        assert_eq!(*sizes.last().unwrap(), 100_000);
        assert_eq!(sizes[3], 1000);
        let lin: GridSpec = "0:1:lin:5".parse().unwrap();
        assert_eq!(lin.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(lin.to_string().parse::<GridSpec>().unwrap(), lin);
        for bad in ["1:2:geo", "0:10:geo:3", "5:1:lin:3", "1:2:log:3", "1:2:lin:0", "a:2:lin:2"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn single_row_delegates_to_oracle() {
        let table = convergence_sweep(&uniform_template(), &[100]).unwrap();
        assert_eq!(table.rows.len(), 1);
        let problem = uniform_template().with_n(100).unwrap();
        assert_eq!(table.rows[0].exact_log, exact_tail(&problem).log_value());
        assert!(convergence_sweep(&uniform_template().with_t(0.0).unwrap(), &[100]).is_err());
    }

    #[test]
    fn cells_are_recomputable() {
        let template = QuantileProblem::new(DistributionSpec::standard(Family::Logistic), 0.3, 1, 0.4, Side::Lower).unwrap();
        let table = convergence_sweep(&template, &[57, 11, 400, 1234, 90]).unwrap();
        let keys: Vec<f64> = table.rows.iter().map(|r| r.key).collect();
        assert_eq!(keys, vec![11.0, 57.0, 90.0, 400.0, 1234.0]);
        for row in &table.rows {
            let n = row.key as u64;
            let problem = template.with_n(n).unwrap();
            let t_r = problem.t / r_scale(&problem.dist, problem.p, n).unwrap();
            assert_eq!(row.br_paper_log, bahadur_rao_log(&problem, PrefactorMode::Paper).unwrap().log_approx);
            assert_eq!(row.br_lattice_log, bahadur_rao_log(&problem, PrefactorMode::Lattice).unwrap().log_approx);
            assert_eq!(row.normal_log, normal_tail(t_r).log_value());
            let cramer = cramer_log_ratio(&problem.dist, problem.p, n, t_r, problem.side, Boundary::Inclusive).unwrap();
            assert!((row.cramer_ratio - cramer.value).abs() < 1e-9 * cramer.value.abs().max(1.0));
            assert_eq!(row.ldp_exponent, -row.exact_log / n as f64);
        }
    }

    #[test]
    fn ldp_exponent_converges() {
        let sizes = "100:100000:geo:10".parse::<GridSpec>().unwrap().sample_sizes().unwrap();
        let table = convergence_sweep(&uniform_template(), &sizes).unwrap();
        for row in &table.rows {
            let n = row.key;
            assert!((row.ldp_exponent - LAMBDA_REF).abs() <= (n.ln() + 10.0) / n, "n={n}");
        }
        let fit = fit_exponent(&table).unwrap();
        assert!((fit.slope / -LAMBDA_REF - 1.0).abs() < 0.01, "{fit:?}");
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn fit_exponent_exact_line_and_insufficient_data() {
        let row = |n: f64| SweepRow {
            key: n,
            exact_log: -0.1 * n,
            br_paper_log: f64::NAN,
            br_lattice_log: f64::NAN,
            normal_log: f64::NAN,
            cramer_ratio: f64::NAN,
            ldp_exponent: 0.1,
            ratio_paper: f64::NAN,
            ratio_lattice: f64::NAN,
            winner: None,
            np_fraction: 0.0,
        };
        let mut table = SweepTable {
            description: String::new(),
            grid: String::new(),
            key_name: "n".into(),
            rows: vec![row(10.0), row(20.0), row(40.0)],
        };
        let fit = fit_exponent(&table).unwrap();
        assert!((fit.slope + 0.1).abs() < 1e-15);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-15);
        table.rows.pop();
        assert!(matches!(fit_exponent(&table), Err(Error::InsufficientData { needed: 3, got: 2 })));
    }

    #[test]
    fn csv_has_fixed_columns() {
        let sizes = "100:100000:geo:10".parse::<GridSpec>().unwrap().sample_sizes().unwrap();
        let csv = convergence_sweep(&uniform_template(), &sizes).unwrap().to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "key,exact_log,br_paper_log,br_lattice_log,normal_log,cramer_ratio,ldp_exponent");
        assert_eq!(lines.len(), 11);
    }

    #[test]
    fn json_round_trip() {
        let table = convergence_sweep(&uniform_template(), &[100, 1000]).unwrap();
        let text = serde_json::to_string(&table).unwrap();
        assert_eq!(serde_json::from_str::<SweepTable>(&text).unwrap(), table);
    }

    #[test]
    fn envelope_one_point() {
        let env = cramer_envelope_fit(&uniform(), 0.5, &[64], 1, &[Side::Upper]).unwrap();
        let r = cramer_log_ratio(&uniform(), 0.5, 64, 0.0, Side::Upper, Boundary::Inclusive).unwrap().value;
        assert!(r > 0.0);
        assert_eq!(env.constant, 8.0 * r.abs());
    }

    #[test]
    fn envelope_finite_on_builtin_families() {
        for family in Family::ALL {
            for p in BATTERY_PROBABILITIES {
                let env = cramer_envelope_fit(&DistributionSpec::standard(family), p, &[100, 1000, 10_000], 11, &Side::BOTH).unwrap();
                assert!(env.constant.is_finite(), "{family:?} p={p}");
            }
        }
    }

    #[test]
    fn pn_sweep_examples() {
        let cauchy = DistributionSpec::standard(Family::Cauchy);
        let sweep = pn_sweep(&cauchy, 1.0, 0.25, &[1000, 10_000, 100_000], ENVELOPE_T_POINTS, &Side::BOTH).unwrap();
        assert!(sweep.constant.is_finite());
        assert!(sweep.warning.is_none());
        let normal = DistributionSpec::standard(Family::Normal);
        let sweep = pn_sweep(&normal, 1.0, 0.5, &[10_000], ENVELOPE_T_POINTS, &Side::BOTH).unwrap();
        assert!((sweep.points[0].p - 0.01).abs() < 1e-15);
        assert!(sweep.constant.is_finite());
        let expo = pn_sweep(&DistributionSpec::standard(Family::Exponential), 1.0, 0.5, &[10_000], 3, &[Side::Upper]).unwrap();
        assert!(expo.warning.is_some());
        assert!(pn_sweep(&normal, 1.0, 0.0, &[100], 3, &[Side::Upper]).is_err());
    }

    #[test]
    fn pn_sweep_at_zero_beta_evaluates_the_fixed_p_ratios() {
        let normal = DistributionSpec::standard(Family::Normal);
        let sweep = pn_sweep(&normal, 0.3, 0.0, &[500], 5, &[Side::Lower]).unwrap();
        for pt in &sweep.points {
            let direct = cramer_log_ratio(&normal, 0.3, 500, pt.t_r, Side::Lower, Boundary::Inclusive).unwrap();
            assert_eq!(pt.cramer_ratio, direct.value);
        }
    }

    #[test]
    fn berry_esseen_single_observation() {
        let be = berry_esseen_sup(&uniform(), 0.5, 1, BE_GRID_POINTS).unwrap();
        assert!((be.sup_diff - 0.158_655_253_931_457).abs() < 1e-9, "{be:?}");
        assert!((be.argmax_t.abs() - 1.0).abs() < 1e-9);
        assert!(be.upper_bound >= be.sup_diff && be.grid_modulus < 0.01);
    }

    #[test]
    fn berry_esseen_symmetric_pair() {
        // R_n is symmetric here, so the deviation at t and -t coincide.
        let dist = uniform();
        let (n, p) = (101, 0.5);
        let be = berry_esseen_sup(&dist, p, n, 801).unwrap();
        let scale = r_scale(&dist, p, n).unwrap();
        let diff = |t: f64| (sample_quantile_cdf(&dist, p, n, 0.5 + t * scale).unwrap().value() - normal_cdf(t)).abs();
        assert!((diff(be.argmax_t) - diff(-be.argmax_t)).abs() < 1e-12);
    }

    #[test]
    fn mdp_examples() {
        let rows = mdp_sweep(&uniform(), 0.5, 1.0, 0.25, &[1_000_000], Side::Upper).unwrap();
        assert!((rows[0].normalized + 0.5).abs() < 0.1, "{:?}", rows[0]);
        assert_eq!(rows[0].raw_target, -2.0);
        assert!((rows[0].raw_normalized + 2.0).abs() < 0.4);
        let zero = mdp_sweep(&uniform(), 0.5, 0.0, 0.25, &[100, 1000], Side::Upper).unwrap();
        assert!(zero.iter().all(|r| r.target == 0.0 && r.raw_target == 0.0));
        assert!(mdp_sweep(&uniform(), 0.5, 1.0, 0.5, &[100], Side::Upper).is_err());
    }

    #[test]
    fn battery_passes_and_documents_orientation() {
        let checks = verification_battery(0.0).unwrap();
        assert_eq!(checks.len(), Family::ALL.len() * 3 * 2 * 2);
        assert!(checks.iter().all(|c| c.passed), "{:#?}", checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        let upper = checks.iter().find(|c| c.name == "rate-identity uniform:0,1 p=0.5 upper").unwrap();
        assert!(upper.detail.starts_with("as printed mismatch"), "{}", upper.detail);
        assert!(upper.detail.contains("complement orientation matches"));
    }

    #[test]
    fn corrupted_rate_fails_battery() {
        let checks = verification_battery(1e-3).unwrap();
        assert!(checks.iter().any(|c| !c.passed));
    }

    #[test]
    fn battery_offsets_respect_support() {
        let offsets = battery_offsets(&uniform(), 0.9, Side::Upper).unwrap();
        assert_eq!(offsets.len(), 10);
        assert!(*offsets.last().unwrap() < 0.1);
        let normal = battery_offsets(&DistributionSpec::standard(Family::Normal), 0.9, Side::Upper).unwrap();
        assert_eq!(*normal.last().unwrap(), 1.0);
    }
}
