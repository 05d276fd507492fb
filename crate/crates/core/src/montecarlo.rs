//! Reproducible simulation of sample quantiles.
//!
//! Each replicate draws its `n` uniforms from a ChaCha8 stream keyed by the
//! seed and positioned at word `2 * (replicate * n + draw)`, so a replicate's
//! sample depends only on `(seed, replicate)`. Replicates run on the current
//! rayon pool and are collected in index order; the output does not depend on
//! the number of worker threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{tail_log_pq, TailSide};
use crate::distributions::{check_probability, DistributionSpec};
use crate::error::{Error, Result};
use crate::exact_oracle::{quantile_rank, sample_quantile_from_data, select_rank, QuantileProblem, Side};

/// Coverage of the reported Clopper-Pearson intervals.
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub replicates: usize,
    pub n: u64,
    pub dist: DistributionSpec,
    pub p: f64,
}

impl SimConfig {
    pub fn new(dist: DistributionSpec, p: f64, n: u64, replicates: usize, seed: u64) -> Result<Self> {
        check_probability(p)?;
        if n == 0 {
            return Err(Error::Domain("sample size n must be at least 1".into()));
        }
        if replicates == 0 {
            return Err(Error::Domain("replicates must be at least 1".into()));
        }
        Ok(Self { seed, replicates, n, dist, p })
    }

    pub fn with_n(&self, n: u64) -> Result<Self> {
        Self::new(self.dist, self.p, n, self.replicates, self.seed)
    }

    /// Fills `buf` with replicate `index`'s sample.
    pub fn draw_sample(&self, index: usize, buf: &mut Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(2 * index as u128 * self.n as u128);
        buf.clear();
        buf.extend((0..self.n).map(|_| {
            let u = open_unit(rng.next_u64());
            self.dist.quantile(u).expect("u lies in (0, 1)")
        }));
    }
}

/// Maps 64 random bits to cell midpoints of a 2^-52 grid, strictly inside (0, 1).
/// (A 2^-53 grid would round its top midpoint up to 1.)
fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Sample quantile `x_{n,p}` of every replicate, in replicate order.
pub fn simulate_quantiles(config: &SimConfig) -> Vec<f64> {
    let rank = quantile_rank(config.n, config.p);
    (0..config.replicates)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(config.n as usize),
            |buf, r| {
                config.draw_sample(r, buf);
                select_rank(buf, rank)
            },
        )
        .collect()
}

/// Frequency of a deviation event with its exact binomial interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTail {
    pub hits: u64,
    pub replicates: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EmpiricalTail {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

pub fn empirical_tail(config: &SimConfig, t: f64, side: Side) -> Result<EmpiricalTail> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("offset t must be non-negative, got {t}")));
    }
    let x_p = config.dist.quantile(config.p)?;
    let hits = simulate_quantiles(config)
        .into_iter()
        .filter(|&x| match side {
            Side::Upper => x >= x_p + t,
            Side::Lower => x <= x_p - t,
        })
        .count() as u64;
    let replicates = config.replicates as u64;
    let (ci_low, ci_high) = clopper_pearson(hits, replicates, CI_LEVEL)?;
    let estimate = hits as f64 / replicates as f64;
    Ok(EmpiricalTail {
        hits,
        replicates,
        estimate,
        ci_low: ci_low.min(estimate),
        ci_high: ci_high.max(estimate),
    })
}

/// Solves `g(q) = target` for a continuous `g` on [0, 1] by bisection;
/// `increasing` gives the direction of monotonicity.
fn bisect_probability(g: impl Fn(f64) -> f64, target: f64, increasing: bool) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(hits: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || hits > trials {
        return Err(Error::Domain(format!("need 0 <= hits <= trials, trials > 0 (got {hits}/{trials})")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let target = ((1.0 - level) / 2.0).ln();
    let k = hits as i64;
    let low = if hits == 0 {
        0.0
    } else {
        // P(Bin(trials, q) >= hits) = alpha/2, increasing in q.
        bisect_probability(|q| tail_log_pq(trials, q, 1.0 - q, k, TailSide::AtLeast), target, true)
    };
    let high = if hits == trials {
        1.0
    } else {
        // P(Bin(trials, q) <= hits) = alpha/2, decreasing in q.
        bisect_probability(|q| tail_log_pq(trials, q, 1.0 - q, k, TailSide::AtMost), target, false)
    };
    Ok((low, high))
}

/// Scaled Bahadur remainders `|R_n| n^{3/4} / (ln n)^{3/4}` for one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderSummary {
    pub n: u64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

/// Remainder `x_{n,p} - x_p - (p - F_n(x_p)) / f(x_p)` of one sample.
pub fn bahadur_remainder(sample: &[f64], x_p: f64, f_xp: f64, p: f64) -> Result<f64> {
    let below = sample.iter().filter(|&&x| x <= x_p).count() as f64;
    let f_n = below / sample.len() as f64;
    Ok(sample_quantile_from_data(sample, p)? - x_p - (p - f_n) / f_xp)
}

pub fn bahadur_remainder_study(config: &SimConfig, n_grid: &[u64]) -> Result<Vec<RemainderSummary>> {
    let x_p = config.dist.quantile(config.p)?;
    let f_xp = config.dist.pdf(x_p);
    if !(f_xp > 0.0) {
        return Err(Error::DegenerateDensity { p: config.p, density: f_xp });
    }
    n_grid
        .iter()
        .map(|&n| {
            if n < 3 {
                return Err(Error::Domain(format!("remainder scaling needs n >= 3, got {n}")));
            }
            let cfg = config.with_n(n)?;
            let nf = n as f64;
            let scale = nf.powf(0.75) / nf.ln().powf(0.75);
            let mut scaled = (0..cfg.replicates)
                .into_par_iter()
                .map_init(
                    || Vec::with_capacity(n as usize),
                    |buf, r| {
                        cfg.draw_sample(r, buf);
                        bahadur_remainder(buf, x_p, f_xp, cfg.p).map(|rem| rem.abs() * scale)
                    },
                )
                .collect::<Result<Vec<f64>>>()?;
            let max = scaled.iter().copied().fold(0.0, f64::max);
            let median = select_rank(&mut scaled, quantile_rank(cfg.replicates as u64, 0.5));
            let q90 = select_rank(&mut scaled, quantile_rank(cfg.replicates as u64, 0.9));
            Ok(RemainderSummary { n, median, q90, max })
        })
        .collect()
}

/// Fixed cross-check cases `(dist, p, n, t, side)`. Every `np` is
/// non-integer, where the inclusive and strict conventions coincide.
pub fn consistency_battery() -> Vec<QuantileProblem> {
    use Side::{Lower, Upper};
    let cases: [(&str, f64, u64, f64, Side); 20] = [
        ("uniform:0,1", 0.5, 5, 0.2, Upper),
        ("uniform:0,1", 0.5, 21, 0.1, Lower),
        ("uniform:0,1", 0.3, 33, 0.1, Upper),
        ("uniform:0,1", 0.9, 25, 0.05, Lower),
        ("exponential:1", 0.5, 15, 0.4, Upper),
        ("exponential:1", 0.1, 41, 0.05, Lower),
        ("exponential:1", 0.9, 31, 0.8, Upper),
        ("exponential:2", 0.25, 18, 0.1, Lower),
        ("normal:0,1", 0.5, 11, 0.5, Upper),
        ("normal:0,1", 0.1, 27, 0.3, Lower),
        ("normal:0,1", 0.75, 13, 0.4, Upper),
        ("normal:1,2", 0.4, 37, 0.5, Lower),
        ("logistic:0,1", 0.5, 9, 1.0, Upper),
        ("logistic:0,1", 0.2, 23, 0.6, Lower),
        ("logistic:0,1", 0.85, 19, 0.8, Upper),
        ("logistic:2,0.5", 0.6, 36, 0.2, Lower),
        ("cauchy:0,1", 0.5, 7, 1.0, Upper),
        ("cauchy:0,1", 0.3, 17, 0.5, Lower),
        ("cauchy:0,1", 0.9, 29, 3.0, Upper),
        ("cauchy:1,2", 0.65, 43, 1.0, Lower),
    ];
    cases
        .iter()
        .map(|&(dist, p, n, t, side)| {
            let dist: DistributionSpec = dist.parse().expect("builtin battery distribution");
            QuantileProblem::new(dist, p, n, t, side).expect("builtin battery case")
        })
        .collect()
}

/// Seed used for battery case `index` under base seed `seed`.
pub fn battery_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}
