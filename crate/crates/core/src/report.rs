use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Relative slack for rounding when both sides agree exactly in exact arithmetic.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// One evaluated instance of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; 0 when both sides vanish.
    pub ratio: f64,
    pub holds: bool,
    pub constants: BTreeMap<String, f64>,
    /// Norms and other measured ingredients of the two sides.
    pub factors: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 && rhs == 0.0 {
            0.0
        } else {
            lhs / rhs
        };
        let holds = lhs.is_finite() && !rhs.is_nan() && lhs <= rhs * (1.0 + ROUNDING_SLACK);
        Self {
            name: name.into(),
            lhs,
            rhs,
            ratio,
            holds,
            constants: BTreeMap::new(),
            factors: BTreeMap::new(),
        }
    }

    pub fn constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }

    pub fn factor(mut self, key: &str, value: f64) -> Self {
        self.factors.insert(key.to_string(), value);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_over_zero() {
        let r = InequalityReport::new("x", 0.0, 0.0);
        assert_eq!(r.ratio, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn violation() {
        let r = InequalityReport::new("x", 2.0, 1.0);
        assert!(!r.holds);
        assert_eq!(r.ratio, 2.0);
    }
}
