//! Turning the learner's output into an insulin rate: the deterministic
//! policy, the predictive mean, and the glucose-adaptive order statistic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample count for which the DKW bound at ε = 0.2 drops below 0.05.
pub const DEFAULT_SAMPLES: usize = 47;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleVariant {
    /// Deterministic forward pass.
    Dlp,
    /// Mean of the MC-dropout samples.
    SlpMean,
    /// Order statistic chosen from the previous glucose reading.
    SlpAdaptive,
}

impl RuleVariant {
    pub fn tag(self) -> &'static str {
        match self {
            RuleVariant::Dlp => "DLP",
            RuleVariant::SlpMean => "SLP-M",
            RuleVariant::SlpAdaptive => "SLP-A",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != RuleVariant::Dlp
    }
}

impl fmt::Display for RuleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RuleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dlp" => Ok(RuleVariant::Dlp),
            "slp-m" | "slpm" => Ok(RuleVariant::SlpMean),
            "slp-a" | "slpa" => Ok(RuleVariant::SlpAdaptive),
            _ => Err(Error::Config(format!("unknown decision rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub variant: RuleVariant,
    pub samples: usize,
    pub bg_lb: f64,
    pub bg_ub: f64,
}

impl DecisionRule {
    pub fn new(variant: RuleVariant) -> Self {
        DecisionRule { variant, samples: DEFAULT_SAMPLES, bg_lb: 70.0, bg_ub: 180.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("decision rule needs at least one sample".into()));
        }
        if !(self.bg_lb < self.bg_ub) {
            return Err(Error::Config(format!("need BG_lb < BG_ub, got {} and {}", self.bg_lb, self.bg_ub)));
        }
        Ok(())
    }

    /// 1-based index of the order statistic used by the adaptive rule:
    /// `clamp(⌈n·(y_prev − BG_lb)/(BG_ub − BG_lb)⌉, 1, n)`.
    pub fn adaptive_index(&self, n: usize, y_prev: f64) -> usize {
        let ratio = (y_prev - self.bg_lb) / (self.bg_ub - self.bg_lb);
        let m = (n as f64 * ratio).ceil();
        if m.is_nan() {
            return 1;
        }
        m.clamp(1.0, n as f64) as usize
    }
}

/// What the rule decides from.
#[derive(Debug, Clone, Copy)]
pub enum LearnerOutput<'a> {
    Value(f64),
    /// Ascending MC-dropout samples.
    Samples(&'a [f64]),
}

/// Applies `rule` and clamps the result to `[0, u_max]`.
pub fn decide(rule: &DecisionRule, output: LearnerOutput<'_>, y_prev: f64, u_max: f64) -> Result<f64> {
    let u = match (rule.variant, output) {
        (RuleVariant::Dlp, LearnerOutput::Value(v)) => v,
        (RuleVariant::Dlp, LearnerOutput::Samples(_)) => {
            return Err(Error::Config("DLP decides from the deterministic output".into()))
        }
        (_, LearnerOutput::Value(_)) => return Err(Error::Config(format!("{} needs samples", rule.variant))),
        (_, LearnerOutput::Samples([])) => return Err(Error::EmptySamples),
        (RuleVariant::SlpMean, LearnerOutput::Samples(s)) => s.iter().sum::<f64>() / s.len() as f64,
        (RuleVariant::SlpAdaptive, LearnerOutput::Samples(s)) => s[rule.adaptive_index(s.len(), y_prev) - 1],
    };
    Ok(u.clamp(0.0, u_max))
}

/// Dvoretzky–Kiefer–Wolfowitz bound on `P(sup |F_n − F| > ε)`: `2·exp(−2nε²)`.
/// Not clamped to 1.
pub fn dkw_bound(n: usize, eps: f64) -> f64 {
    2.0 * (-2.0 * n as f64 * eps * eps).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dkw_values() {
        assert!((dkw_bound(47, 0.2) - 0.046_58).abs() < 1e-4);
        assert!(dkw_bound(47, 0.2) < 0.05);
        assert!(dkw_bound(46, 0.2) > 0.05);
        assert!((dkw_bound(1, 0.5) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(dkw_bound(10, 1e3), 0.0);
    }

    #[test]
    fn adaptive_rule_endpoints() {
        let rule = DecisionRule::new(RuleVariant::SlpAdaptive);
        let s: Vec<f64> = (1..=47).map(f64::from).collect();
        assert_eq!(decide(&rule, LearnerOutput::Samples(&s), 70.0, 100.0).unwrap(), 1.0);
        assert_eq!(decide(&rule, LearnerOutput::Samples(&s), 180.0, 100.0).unwrap(), 47.0);
        assert_eq!(decide(&rule, LearnerOutput::Samples(&s), 40.0, 100.0).unwrap(), 1.0);
        assert_eq!(decide(&rule, LearnerOutput::Samples(&s), 400.0, 100.0).unwrap(), 47.0);
        // midpoint 125 → ⌈47/2⌉ = 24
        assert_eq!(decide(&rule, LearnerOutput::Samples(&s), 125.0, 100.0).unwrap(), 24.0);
    }

    #[test]
    fn mean_rule_and_clamping() {
        let rule = DecisionRule::new(RuleVariant::SlpMean);
        assert_eq!(decide(&rule, LearnerOutput::Samples(&[2.0, 4.0, 9.0]), 100.0, 100.0).unwrap(), 5.0);
        assert_eq!(decide(&rule, LearnerOutput::Samples(&[200.0]), 100.0, 100.0).unwrap(), 100.0);
        let dlp = DecisionRule::new(RuleVariant::Dlp);
        assert_eq!(decide(&dlp, LearnerOutput::Value(-3.0), 100.0, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let a = DecisionRule::new(RuleVariant::SlpAdaptive);
        assert!(matches!(decide(&a, LearnerOutput::Samples(&[]), 100.0, 100.0), Err(Error::EmptySamples)));
        assert!(decide(&a, LearnerOutput::Value(1.0), 100.0, 100.0).is_err());
        let d = DecisionRule::new(RuleVariant::Dlp);
        assert!(decide(&d, LearnerOutput::Samples(&[1.0]), 100.0, 100.0).is_err());
    }

    #[test]
    fn variant_tags_parse() {
        for v in [RuleVariant::Dlp, RuleVariant::SlpMean, RuleVariant::SlpAdaptive] {
            assert_eq!(v.tag().parse::<RuleVariant>().unwrap(), v);
        }
    }
}
