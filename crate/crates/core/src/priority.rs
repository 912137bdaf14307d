//! Semantic priority from a discrete level and a continuous severity score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PriorityError {
    #[error("level {level} outside 0..{num_levels}")]
    LevelRange { level: u32, num_levels: u32 },
    #[error("need at least two priority levels, got {0}")]
    TooFewLevels(u32),
    #[error("{name}={value} outside {range}")]
    ParamRange { name: &'static str, value: f64, range: &'static str },
}

/// Raw priority output attached to an event: level in `0..num_levels` and a
/// score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityOutput {
    pub level: u32,
    pub score: f64,
    pub num_levels: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticPriority(f64);

impl SemanticPriority {
    /// Wraps a raw value; panics outside `[0, 1]`.
    pub fn new(value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "semantic priority {value} outside [0, 1]");
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Score band `[lo, hi)` for a level (the top level is closed at 1).
///
/// Two-level outputs split at `gamma`; more levels split `[0, 1]` uniformly.
pub fn band(level: u32, num_levels: u32, gamma: f64) -> (f64, f64) {
    if num_levels == 2 {
        if level == 0 {
            (0.0, gamma)
        } else {
            (gamma, 1.0)
        }
    } else {
        let l = num_levels as f64;
        (level as f64 / l, (level + 1) as f64 / l)
    }
}

pub fn validate_priority(p: &PriorityOutput, gamma: f64) -> bool {
    if p.num_levels < 2 || p.level >= p.num_levels || !(0.0..=1.0).contains(&p.score) {
        return false;
    }
    let (lo, hi) = band(p.level, p.num_levels, gamma);
    if p.level + 1 == p.num_levels {
        p.score >= lo && p.score <= hi
    } else {
        p.score >= lo && p.score < hi
    }
}

/// Moves an out-of-band score to the nearest value inside its level's band.
pub fn clamp_to_band(p: &PriorityOutput, gamma: f64) -> PriorityOutput {
    if validate_priority(p, gamma) {
        return *p;
    }
    let (lo, hi) = band(p.level, p.num_levels, gamma);
    let top = p.level + 1 == p.num_levels;
    let score = if p.score < lo {
        lo
    } else if top {
        hi
    } else {
        // Largest float strictly below the open upper bound.
        f64::from_bits(hi.to_bits() - 1).max(lo)
    };
    PriorityOutput { score, ..*p }
}

pub fn normalize_level(level: u32, num_levels: u32) -> Result<f64, PriorityError> {
    if num_levels < 2 {
        return Err(PriorityError::TooFewLevels(num_levels));
    }
    if level >= num_levels {
        return Err(PriorityError::LevelRange { level, num_levels });
    }
    Ok(level as f64 / (num_levels - 1) as f64)
}

/// `beta * level_norm + (1 - beta) * score`.
pub fn semantic_priority(level_norm: f64, score: f64, beta: f64) -> Result<SemanticPriority, PriorityError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(PriorityError::ParamRange { name: "beta", value: beta, range: "(0, 1)" });
    }
    for (name, value) in [("level_norm", level_norm), ("score", score)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(PriorityError::ParamRange { name, value, range: "[0, 1]" });
        }
    }
    let s = beta * level_norm + (1.0 - beta) * score;
    Ok(SemanticPriority(s.clamp(0.0, 1.0)))
}

/// Normalizes the level and mixes it with the score.
pub fn priority_of(p: &PriorityOutput, beta: f64) -> Result<SemanticPriority, PriorityError> {
    semantic_priority(normalize_level(p.level, p.num_levels)?, p.score, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn out(level: u32, score: f64) -> PriorityOutput {
        PriorityOutput { level, score, num_levels: 2 }
    }

    #[test]
    fn band_examples() {
        assert!(validate_priority(&out(1, 0.9), 0.5));
        assert!(!validate_priority(&out(0, 0.5), 0.5));
        assert!(!validate_priority(&out(1, 0.3), 0.5));
        assert!(validate_priority(&out(1, 0.5), 0.5));
        assert!(validate_priority(&out(1, 1.0), 0.5));
        assert!(!validate_priority(&out(2, 0.9), 0.5));
    }

    #[test]
    fn multi_level_bands() {
        let p = |level, score| PriorityOutput { level, score, num_levels: 4 };
        assert!(validate_priority(&p(0, 0.1), 0.5));
        assert!(validate_priority(&p(2, 0.5), 0.5));
        assert!(!validate_priority(&p(2, 0.75), 0.5));
        assert!(validate_priority(&p(3, 1.0), 0.5));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_level(1, 2).unwrap(), 1.0);
        assert_eq!(normalize_level(0, 2).unwrap(), 0.0);
        assert_eq!(normalize_level(1, 3).unwrap(), 0.5);
        assert_eq!(normalize_level(2, 2), Err(PriorityError::LevelRange { level: 2, num_levels: 2 }));
        assert_eq!(normalize_level(0, 1), Err(PriorityError::TooFewLevels(1)));
    }

    #[test]
    fn mixing_examples() {
        assert!((semantic_priority(1.0, 0.9, 0.5).unwrap().value() - 0.95).abs() < 1e-12);
        assert!((semantic_priority(0.0, 0.3, 0.5).unwrap().value() - 0.15).abs() < 1e-12);
        assert!((semantic_priority(1.0, 0.0, 0.99).unwrap().value() - 0.99).abs() < 1e-12);
        assert!(semantic_priority(1.0, 0.0, 1.0).is_err());
        assert!(semantic_priority(1.0, 0.0, 0.0).is_err());
        assert!(semantic_priority(1.2, 0.0, 0.5).is_err());
    }

    #[test]
    fn clamp_lands_in_band() {
        let c = clamp_to_band(&out(0, 0.7), 0.5);
        assert!(validate_priority(&c, 0.5) && c.score < 0.5);
        let c = clamp_to_band(&out(1, 0.2), 0.5);
        assert_eq!(c.score, 0.5);
    }

    proptest! {
        #[test]
        fn strictly_increasing(l in 0.0f64..0.99, r in 0.0f64..0.99, beta in 0.01f64..0.99, dl in 0.001f64..0.01) {
            let base = semantic_priority(l, r, beta).unwrap().value();
            prop_assert!(semantic_priority(l + dl, r, beta).unwrap().value() > base);
            prop_assert!(semantic_priority(l, r + dl, beta).unwrap().value() > base);
        }

        #[test]
        fn level_one_dominates_when_gamma_le_beta(
            beta in 0.05f64..0.95, frac in 0.0f64..=1.0,
            r1 in 0.0f64..=1.0, r0 in 0.0f64..=1.0,
        ) {
            let gamma = (beta * frac).max(1e-6);
            let hi = clamp_to_band(&out(1, r1), gamma);
            let lo = clamp_to_band(&out(0, r0), gamma);
            let s_hi = priority_of(&hi, beta).unwrap().value();
            let s_lo = priority_of(&lo, beta).unwrap().value();
            prop_assert!(s_hi > s_lo, "{} <= {}", s_hi, s_lo);
        }

        #[test]
        fn mix_stays_in_unit_interval(l in 0.0f64..=1.0, r in 0.0f64..=1.0, beta in 0.001f64..0.999) {
            let s = semantic_priority(l, r, beta).unwrap().value();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
