use serde::{Deserialize, Serialize};

use super::rollout::RolloutRecord;
use crate::error::{Error, Result};

pub const HYPO_BG: f64 = 70.0;
pub const HYPER_BG: f64 = 180.0;

/// Closed-loop performance of one rollout. Times are percentages of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub t_hypo: f64,
    pub t_eu: f64,
    pub t_hyper: f64,
    pub bg_max: f64,
    pub bg_min: f64,
    pub u_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    THypo,
    TEu,
    THyper,
    BgMax,
    BgMin,
    UMean,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::THypo, Metric::TEu, Metric::THyper, Metric::BgMax, Metric::BgMin, Metric::UMean];

    pub fn name(self) -> &'static str {
        match self {
            Metric::THypo => "t_hypo",
            Metric::TEu => "t_eu",
            Metric::THyper => "t_hyper",
            Metric::BgMax => "BG_max",
            Metric::BgMin => "BG_min",
            Metric::UMean => "u",
        }
    }

    /// Whether a larger value is the worse outcome, which fixes the
    /// direction of the one-sided test for "first policy is better".
    pub fn larger_is_worse(self) -> bool {
        matches!(self, Metric::THypo | Metric::THyper | Metric::BgMax)
    }

    pub fn of(self, m: &MetricSet) -> f64 {
        match self {
            Metric::THypo => m.t_hypo,
            Metric::TEu => m.t_eu,
            Metric::THyper => m.t_hyper,
            Metric::BgMax => m.bg_max,
            Metric::BgMin => m.bg_min,
            Metric::UMean => m.u_mean,
        }
    }
}

/// Step-fraction metrics on true BG. `BG ≤ 70` counts as hypo and
/// `BG ≥ 180` as hyper, so the three shares always add to 100.
pub fn metrics_of(bg: &[f64], u: &[f64]) -> Result<MetricSet> {
    if bg.is_empty() || u.len() != bg.len() {
        return Err(Error::Shape(format!("metrics need equal non-empty traces, got {} and {}", bg.len(), u.len())));
    }
    let n = bg.len();
    let hypo = bg.iter().filter(|&&b| b <= HYPO_BG).count();
    let hyper = bg.iter().filter(|&&b| b >= HYPER_BG).count();
    let eu = n - hypo - hyper;
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(MetricSet {
        t_hypo: pct(hypo),
        t_eu: pct(eu),
        t_hyper: pct(hyper),
        bg_max: bg.iter().copied().fold(f64::MIN, f64::max),
        bg_min: bg.iter().copied().fold(f64::MAX, f64::min),
        u_mean: u.iter().sum::<f64>() / n as f64,
    })
}

pub fn compute_metrics(r: &RolloutRecord) -> Result<MetricSet> {
    metrics_of(&r.bg, &r.u)
}
