use serde::{Deserialize, Serialize};

/// A probability carried in the log domain.
///
/// `value` is the linear-domain shadow `exp(log_value)`; it underflows to 0
/// for deep tails while `log_value` stays exact. `log_value == -inf` iff the
/// event is impossible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogProbability {
    #[serde(with = "crate::serde_ext::extended_f64")]
    log_value: f64,
    value: f64,
}

impl LogProbability {
    pub const ZERO: LogProbability = LogProbability { log_value: f64::NEG_INFINITY, value: 0.0 };
    pub const ONE: LogProbability = LogProbability { log_value: 0.0, value: 1.0 };

    /// Wraps a log-probability. Values above 0 from rounding are clamped.
    pub fn from_log(log_value: f64) -> Self {
        debug_assert!(!log_value.is_nan(), "log-probability is NaN");
        let log_value = log_value.min(0.0);
        Self { log_value, value: log_value.exp() }
    }

    pub fn from_value(value: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&value), "probability {value} outside [0, 1]");
        Self { log_value: value.ln(), value }
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_impossible(&self) -> bool {
        self.log_value == f64::NEG_INFINITY
    }

    /// `1 - self`, computed as `log1p(-p)` so small values stay accurate.
    pub fn complement(&self) -> Self {
        if self.log_value < -std::f64::consts::LN_2 {
            Self::from_log((-self.value).ln_1p())
        } else {
            Self::from_log((-self.log_value.exp_m1()).ln())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_and_complement() {
        assert!(LogProbability::ZERO.is_impossible());
        assert_eq!(LogProbability::ONE.complement(), LogProbability::ZERO);
        assert_eq!(LogProbability::ZERO.complement(), LogProbability::ONE);
        let p = LogProbability::from_value(1e-20);
        assert!((p.complement().log_value() + 1e-20).abs() < 1e-35);
        let q = LogProbability::from_log(-1e-18);
        assert!((q.complement().log_value() - (1e-18f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn deep_tail_keeps_log() {
        let p = LogProbability::from_log(-9000.0);
        assert_eq!(p.value(), 0.0);
        assert_eq!(p.log_value(), -9000.0);
        assert!(!p.is_impossible());
    }

    #[test]
    fn json_roundtrip_with_infinite_log() {
        for p in [LogProbability::ZERO, LogProbability::from_log(-3.5), LogProbability::ONE] {
            let s = serde_json::to_string(&p).unwrap();
            let back: LogProbability = serde_json::from_str(&s).unwrap();
            assert_eq!(back, p);
        }
        let s = serde_json::to_string(&LogProbability::ZERO).unwrap();
        assert_eq!(s, r#"{"log_value":"-inf","value":0.0}"#);
    }
}
