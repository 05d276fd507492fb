//! One-dimensional golden-section search.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// A located extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub x: f64,
    pub value: f64,
}

/// Maximizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// The endpoints are evaluated as well, so a maximum sitting on the boundary
/// of the bracket is returned exactly. Any non-finite evaluation is reported
/// as a bracket error.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Extremum>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) || !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Bracket(format!("invalid bracket [{lo}, {hi}] with tolerance {tol}")));
    }
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Bracket(format!("objective is {v} at {x}")))
        }
    };

    let mut best = Extremum { x: lo, value: eval(lo)? };
    let at_hi = eval(hi)?;
    if at_hi > best.value {
        best = Extremum { x: hi, value: at_hi };
    }

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.value {
            best = Extremum { x, value: v };
        }
    }
    Ok(best)
}

/// Minimizes a unimodal `f` on `[lo, hi]`; see [`golden_section_max`].
pub fn golden_section_min<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Extremum>
where
    F: Fn(f64) -> f64,
{
    let m = golden_section_max(|x| -f(x), lo, hi, tol)?;
    Ok(Extremum { x: m.x, value: -m.value })
}
