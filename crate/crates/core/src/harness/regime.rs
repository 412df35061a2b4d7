//! Which of the four overhead regimes a topology falls in, and the overhead
//! predicted for it.

use serde::{Deserialize, Serialize};

/// Constants standing in for the unstated ones in the asymptotic regime
/// boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { c_a: 1.0, c_b: 1.0, c_c: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeInfo {
    pub regime: u8,
    /// Predicted multiplicative overhead; for reporting only.
    pub overhead: f64,
}

/// Classify `n1` parties per link and `2^log2_n2` links. The link count is
/// given by its logarithm so that very large counts can be explored.
///
/// Returns `None` when `n1 < 2` or `log2_n2` is negative or not finite.
pub fn select_regime(n1: usize, log2_n2: f64, t: &Thresholds) -> Option<RegimeInfo> {
    if n1 < 2 || !log2_n2.is_finite() || log2_n2 < 0.0 {
        return None;
    }
    let n1f = n1 as f64;
    let log_n1 = n1f.log2();
    let loglog_n1 = log_n1.log2();
    // log2 log2 n2, with the usual convention of 0 for n2 <= 2.
    let loglog_n2 = if log2_n2 > 1.0 { log2_n2.log2() } else { 0.0 };
    let (regime, overhead) = if log2_n2 <= t.c_a * log_n1 {
        (1, loglog_n1)
    } else if log2_n2 <= t.c_b * n1f {
        (2, loglog_n2)
    } else {
        // For n1 <= 2 the denominator vanishes and the third regime extends
        // without bound.
        let bound = if loglog_n1 > 0.0 { t.c_c * n1f * log_n1 / loglog_n1 } else { f64::INFINITY };
        if loglog_n2 <= bound {
            (3, log2_n2 * loglog_n1 / log_n1)
        } else {
            (4, n1f * log2_n2 / loglog_n2)
        }
    };
    Some(RegimeInfo { regime, overhead })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_are_half_open() {
        let t = Thresholds::default();
        // log2 n2 = log2 n1 exactly is still the first regime.
        assert_eq!(select_regime(16, 4.0, &t).unwrap().regime, 1);
        assert_eq!(select_regime(16, 4.000001, &t).unwrap().regime, 2);
        assert_eq!(select_regime(16, 16.0, &t).unwrap().regime, 2);
        assert_eq!(select_regime(16, 16.5, &t).unwrap().regime, 3);
        assert!(select_regime(1, 3.0, &t).is_none());
    }

    #[test]
    fn fourth_regime_is_reachable() {
        let t = Thresholds::default();
        // n1 = 4: third regime needs loglog n2 <= 8, i.e. log2 n2 <= 256.
        assert_eq!(select_regime(4, 256.0, &t).unwrap().regime, 3);
        let r = select_regime(4, 512.0, &t).unwrap();
        assert_eq!(r.regime, 4);
        assert!((r.overhead - 4.0 * 512.0 / 9.0).abs() < 1e-9);
    }
}
