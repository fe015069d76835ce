pub mod metrics;
pub mod plot;
pub mod report;
pub mod rollout;
pub mod stats;

pub use metrics::{compute_metrics, metrics_of, Metric, MetricSet, HYPER_BG, HYPO_BG};
pub use plot::{bg_profile_script, PlotSeries};
pub use report::{compare_policies, second_better, PairTest, PolicyResults, Report, SummaryRow};
pub use rollout::{rollout, rollouts, PolicyKind, RolloutRecord, RolloutSetup};
pub use stats::{
    binomial_upper_tail, coefficient_of_variation, cov_series, kolmogorov_q, ks_statistic, ks_two_sample, sign_test,
    Alternative, CovSeries,
};
