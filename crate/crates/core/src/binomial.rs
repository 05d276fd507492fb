//! Binomial probabilities in the log domain.
//!
//! The pmf uses Loader's saddle-point form: Stirling-series remainders for the
//! factorials plus the deviance term `bd0`, which keeps full relative accuracy
//! for large `n` where differences of log-gamma values would cancel. Tails are
//! summed outward from the requested boundary towards the far end, always on
//! the side of the distribution that lies beyond the mean; the other tail is
//! obtained by complement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::LogProbability;

const LN_2PI: f64 = 1.837_877_066_409_345_483_560_659_472_811;

/// Which tail of `Bin(n, q)` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// `P(Bin <= k)`
    AtMost,
    /// `P(Bin >= k)`
    AtLeast,
}

/// `ln(k!) - (k + 1/2) ln k + k - ln sqrt(2 pi)` for k = 1..=15 (mpmath, 20 digits).
const STIRLERR_TABLE: [f64; 15] = [
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_094,
    0.027_677_925_684_998_339_149,
    0.020_790_672_103_765_093_112,
    0.016_644_691_189_821_192_163,
    0.013_876_128_823_070_747_999,
    0.011_896_709_945_891_770_095,
    0.010_411_265_261_972_096_497,
    0.009_255_462_182_712_732_917_7,
    0.008_330_563_433_362_871_256_5,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_865_7,
    0.006_408_994_188_004_207_068_4,
    0.005_951_370_112_758_847_735_6,
    0.005_554_733_551_962_801_371,
];

const S0: f64 = 1.0 / 12.0;
const S1: f64 = 1.0 / 360.0;
const S2: f64 = 1.0 / 1260.0;
const S3: f64 = 1.0 / 1680.0;
const S4: f64 = 1.0 / 1188.0;

/// Remainder of Stirling's formula for `ln(n!)`, n >= 1.
fn stirlerr(n: u64) -> f64 {
    if n <= 15 {
        return STIRLERR_TABLE[(n - 1) as usize];
    }
    let x = n as f64;
    let xx = x * x;
    if n > 500 {
        (S0 - S1 / xx) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / xx) / xx) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
    }
}

/// Deviance `x ln(x/m) + m - x`, evaluated by series when `x` is close to `m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
        return s;
    }
    x * (x / m).ln() + m - x
}

/// `ln P(Bin(n, q) = k)` with `qc = 1 - q` supplied by the caller.
pub(crate) fn log_pmf_pq(n: u64, k: u64, q: f64, qc: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if q == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if qc == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if k == 0 {
        return if q < 0.1 { -bd0(nf, nf * qc) - nf * q } else { nf * qc.ln() };
    }
    if k == n {
        return if qc < 0.1 { -bd0(nf, nf * q) - nf * qc } else { nf * q.ln() };
    }
    let kf = k as f64;
    let lc = stirlerr(n)
        - stirlerr(k)
        - stirlerr(n - k)
        - bd0(kf, nf * q)
        - bd0(nf - kf, nf * qc);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln P(Bin(n, q) = k)`.
pub fn binomial_log_pmf(n: u64, k: u64, q: f64) -> f64 {
    log_pmf_pq(n, k, q, 1.0 - q)
}

/// Relative size below which further tail terms are dropped.
const TAIL_CUTOFF: f64 = 1e-18;

/// `ln P(Bin <= k)` for `0 <= k < n`, summing downward; caller ensures `k < nq`.
fn lower_sum_log(n: u64, k: u64, q: f64, qc: f64) -> f64 {
    let odds = qc / q;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = k;
    while j > 0 {
        term *= j as f64 / (n - j + 1) as f64 * odds;
        sum += term;
        if term <= sum * TAIL_CUTOFF {
            break;
        }
        j -= 1;
    }
    log_pmf_pq(n, k, q, qc) + sum.ln()
}

/// `ln P(Bin >= k)` for `0 < k <= n`, summing upward; caller ensures `k > nq`.
fn upper_sum_log(n: u64, k: u64, q: f64, qc: f64) -> f64 {
    let odds = q / qc;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = k;
    while j < n {
        term *= (n - j) as f64 / (j + 1) as f64 * odds;
        sum += term;
        if term <= sum * TAIL_CUTOFF {
            break;
        }
        j += 1;
    }
    log_pmf_pq(n, k, q, qc) + sum.ln()
}

fn ln_one_minus_exp(log_p: f64) -> f64 {
    if log_p < -std::f64::consts::LN_2 {
        (-log_p.exp()).ln_1p()
    } else {
        (-log_p.exp_m1()).ln()
    }
}

/// Binomial tail with the complement probability supplied separately, so
/// that callers holding an accurate survival function keep its precision.
pub(crate) fn tail_log_pq(n: u64, q: f64, qc: f64, k: i64, side: TailSide) -> f64 {
    let n_i = n as i64;
    // Degenerate laws: Bin(n, 0) = 0 and Bin(n, 1) = n almost surely.
    let point_mass = if q == 0.0 {
        Some(0)
    } else if qc == 0.0 {
        Some(n_i)
    } else {
        None
    };
    if let Some(at) = point_mass {
        let hit = match side {
            TailSide::AtMost => at <= k,
            TailSide::AtLeast => at >= k,
        };
        return if hit { 0.0 } else { f64::NEG_INFINITY };
    }

    let mean = n as f64 * q;
    match side {
        TailSide::AtMost => {
            if k < 0 {
                f64::NEG_INFINITY
            } else if k >= n_i {
                0.0
            } else if (k as f64) < mean {
                lower_sum_log(n, k as u64, q, qc)
            } else {
                ln_one_minus_exp(upper_sum_log(n, (k + 1) as u64, q, qc))
            }
        }
        TailSide::AtLeast => {
            if k <= 0 {
                0.0
            } else if k > n_i {
                f64::NEG_INFINITY
            } else if (k as f64) > mean {
                upper_sum_log(n, k as u64, q, qc)
            } else {
                ln_one_minus_exp(lower_sum_log(n, (k - 1) as u64, q, qc))
            }
        }
    }
}

/// `P(Bin(n, q) <= k)` or `P(Bin(n, q) >= k)` in the log domain.
///
/// Out-of-range `k` gives the conventional 0 or 1 rather than an error.
pub fn binomial_tail_log(n: u64, q: f64, k: i64, side: TailSide) -> Result<LogProbability> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("binomial success probability must lie in [0, 1], got {q}")));
    }
    if n == 0 {
        return Err(Error::Domain("binomial size must be at least 1".into()));
    }
    Ok(LogProbability::from_log(tail_log_pq(n, q, 1.0 - q, k, side)))
}
