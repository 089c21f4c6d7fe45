use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReversibilityCategory {
    Irreversible,
    PartiallyReversible,
    HighlyReversible,
}

impl ReversibilityCategory {
    pub const IRREVERSIBLE_BELOW: f64 = 0.2;
    pub const HIGHLY_FROM: f64 = 0.8;

    pub fn of(value: f64) -> Self {
        if value < Self::IRREVERSIBLE_BELOW {
            Self::Irreversible
        } else if value < Self::HIGHLY_FROM {
            Self::PartiallyReversible
        } else {
            Self::HighlyReversible
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversibilityScore {
    pub value: f64,
    pub category: ReversibilityCategory,
}

/// Share of the accuracy lost to anonymization that de-anonymization wins
/// back: `(deanon - naive) / (clear - naive)`, clamped to `[0, 1]`.
pub fn reversibility(acc_clear: f64, acc_naive: f64, acc_deanon: f64) -> Result<ReversibilityScore> {
    for (name, v) in [("clear", acc_clear), ("naive", acc_naive), ("deanon", acc_deanon)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} accuracy {v} outside [0, 1]")));
        }
    }
    if acc_clear <= acc_naive {
        return Err(Error::InvalidParameter(format!(
            "reversibility undefined: clear accuracy {acc_clear} does not exceed naive accuracy {acc_naive}"
        )));
    }
    let value = ((acc_deanon - acc_naive) / (acc_clear - acc_naive)).clamp(0.0, 1.0);
    Ok(ReversibilityScore {
        value,
        category: ReversibilityCategory::of(value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn limits_and_midpoint() {
        let full = reversibility(0.9, 0.1, 0.9).unwrap();
        assert_eq!(full.value, 1.0);
        assert_eq!(full.category, ReversibilityCategory::HighlyReversible);
        let none = reversibility(0.9, 0.1, 0.1).unwrap();
        assert_eq!(none.value, 0.0);
        assert_eq!(none.category, ReversibilityCategory::Irreversible);
        let mid = reversibility(0.9, 0.1, 0.5).unwrap();
        assert!((mid.value - 0.5).abs() < 1e-12);
        assert_eq!(mid.category, ReversibilityCategory::PartiallyReversible);
    }

    #[test]
    fn undefined_when_naive_matches_clear() {
        assert!(reversibility(0.5, 0.5, 0.7).is_err());
        assert!(reversibility(0.4, 0.5, 0.7).is_err());
        assert!(reversibility(1.2, 0.5, 0.7).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(ReversibilityCategory::of(0.1999), ReversibilityCategory::Irreversible);
        assert_eq!(
            ReversibilityCategory::of(0.2),
            ReversibilityCategory::PartiallyReversible
        );
        assert_eq!(ReversibilityCategory::of(0.8), ReversibilityCategory::HighlyReversible);
    }

    proptest! {
        #[test]
        fn monotone_in_deanon(clear in 0.5f64..1.0, naive in 0.0f64..0.49, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = reversibility(clear, naive, lo).unwrap().value;
            let s_hi = reversibility(clear, naive, hi).unwrap().value;
            prop_assert!(s_lo <= s_hi);
        }
    }
}
