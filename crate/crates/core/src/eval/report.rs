//! Per-policy summaries and pairwise sign tests over matched rollouts.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{Metric, MetricSet};
use super::rollout::PolicyKind;
use super::stats::{sign_test, Alternative};
use crate::error::{Error, Result};

/// Metrics of one policy over a set of rollouts, keyed by rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResults {
    pub policy: String,
    pub seed: u64,
    /// `(rollout index, metrics)`.
    pub runs: Vec<(u64, MetricSet)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    /// `(mean, population std)` per metric, in [`Metric::ALL`] order.
    pub stats: Vec<(f64, f64)>,
    /// Significantly best against every other policy, per metric.
    pub bold: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub first: String,
    pub second: String,
    pub metric: Metric,
    /// `None` when every paired difference is zero.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub rollouts: usize,
    pub rows: Vec<SummaryRow>,
    pub tests: Vec<PairTest>,
}

/// Direction of the one-sided test of `first − second` under which the
/// second policy is the better one: larger is worse for `t_hypo`,
/// `t_hyper` and `BG_max`, smaller for the rest.
pub fn second_better(metric: Metric) -> Alternative {
    if metric.larger_is_worse() {
        Alternative::Greater
    } else {
        Alternative::Less
    }
}

fn order_key(tag: &str) -> (usize, String) {
    (tag.parse::<PolicyKind>().map(|p| p.rank()).unwrap_or(usize::MAX), tag.to_string())
}

fn paired(a: &PolicyResults, b: &PolicyResults, m: Metric) -> Vec<f64> {
    a.runs.iter().zip(&b.runs).map(|((_, x), (_, y))| m.of(x) - m.of(y)).collect()
}

fn p_or_one(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(p) => Ok(Some(p)),
        Err(Error::UndefinedTest) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean ± std per metric and policy, sign tests for every pair in canonical
/// order (`first − second`, alternative "second is better"), and bold marks
/// for policies better than all others at level `alpha`.
pub fn compare_policies(results: &[PolicyResults], alpha: f64) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::Config("nothing to compare".into()));
    }
    let mut sorted: Vec<PolicyResults> = results.to_vec();
    for r in &mut sorted {
        r.runs.sort_by_key(|(i, _)| *i);
    }
    sorted.sort_by_key(|r| order_key(&r.policy));
    let reference: Vec<u64> = sorted[0].runs.iter().map(|(i, _)| *i).collect();
    for r in &sorted {
        let idx: Vec<u64> = r.runs.iter().map(|(i, _)| *i).collect();
        if idx != reference || r.seed != sorted[0].seed {
            return Err(Error::SeedMismatch(format!(
                "{} was run on seed {} rollouts {:?}, {} on seed {} rollouts {:?}",
                r.policy, r.seed, idx, sorted[0].policy, sorted[0].seed, reference
            )));
        }
        if idx.is_empty() {
            return Err(Error::Config(format!("{} has no rollouts", r.policy)));
        }
    }

    let mut tests = Vec::new();
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            for m in Metric::ALL {
                let p = p_or_one(sign_test(&paired(&sorted[i], &sorted[j], m), second_better(m)))?;
                tests.push(PairTest { first: sorted[i].policy.clone(), second: sorted[j].policy.clone(), metric: m, p });
            }
        }
    }

    let mut rows = Vec::new();
    for (i, r) in sorted.iter().enumerate() {
        let n = r.runs.len() as f64;
        let mut stats = Vec::new();
        let mut bold = Vec::new();
        for m in Metric::ALL {
            let mean = r.runs.iter().map(|(_, s)| m.of(s)).sum::<f64>() / n;
            let var = r.runs.iter().map(|(_, s)| (m.of(s) - mean).powi(2)).sum::<f64>() / n;
            stats.push((mean, var.sqrt()));
            let mut best = sorted.len() > 1;
            for (j, other) in sorted.iter().enumerate() {
                if i == j {
                    continue;
                }
                // test "r is better than other" with r in the second slot
                let p = p_or_one(sign_test(&paired(other, r, m), second_better(m)))?;
                if !matches!(p, Some(p) if p < alpha) {
                    best = false;
                }
            }
            bold.push(best);
        }
        rows.push(SummaryRow { policy: r.policy.clone(), stats, bold });
    }
    Ok(Report { alpha, rollouts: reference.len(), rows, tests })
}

impl Report {
    /// Summary CSV: `policy,metric,mean,std,best`.
    pub fn write_summary_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["policy", "metric", "mean", "std", "best"])?;
        for r in &self.rows {
            for (k, m) in Metric::ALL.iter().enumerate() {
                wtr.write_record([
                    r.policy.clone(),
                    m.name().to_string(),
                    r.stats[k].0.to_string(),
                    r.stats[k].1.to_string(),
                    r.bold[k].to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Pairwise CSV: `first,second,metric,p` (empty p when undefined).
    pub fn write_tests_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["first", "second", "metric", "p"])?;
        for t in &self.tests {
            let p = t.p.map(|p| format!("{p:.4e}")).unwrap_or_default();
            wtr.write_record([t.first.as_str(), t.second.as_str(), t.metric.name(), p.as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Plain-text table; significantly best entries are wrapped in `*…*`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} rollouts per policy, bold (*) at p < {}", self.rollouts, self.alpha);
        let _ = write!(s, "{:<8}", "policy");
        for m in Metric::ALL {
            let _ = write!(s, " {:>18}", m.name());
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<8}", r.policy);
            for k in 0..Metric::ALL.len() {
                let cell = format!("{:.2} ± {:.2}", r.stats[k].0, r.stats[k].1);
                let cell = if r.bold[k] { format!("*{cell}*") } else { cell };
                let _ = write!(s, " {cell:>18}");
            }
            s.push('\n');
        }
        if !self.tests.is_empty() {
            s.push_str("\npairwise one-sided sign tests (first − second; second better)\n");
            let _ = write!(s, "{:<18}", "pair");
            for m in Metric::ALL {
                let _ = write!(s, " {:>11}", m.name());
            }
            s.push('\n');
            for chunk in self.tests.chunks(Metric::ALL.len()) {
                let _ = write!(s, "{:<18}", format!("{} vs {}", chunk[0].first, chunk[0].second));
                for t in chunk {
                    let _ = write!(s, " {:>11}", t.p.map(|p| format!("{p:.4e}")).unwrap_or_else(|| "-".into()));
                }
                s.push('\n');
            }
        }
        s
    }
}
