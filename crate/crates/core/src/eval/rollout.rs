//! Closed-loop test rollouts of the five policies under matched draws.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::{solve_supervision, MheConfig, MovingHorizonEstimator, MpcConfig, MpcProblem, Plant};
use crate::error::{Error, Result};
use crate::patient::{
    cgm_observe, sample_meal_schedule, sample_patient_params, MealDistributionSpec, ModelConstants, PatientConfig,
    PatientModel, PatientParameters, SensorConfig, VariabilitySpec,
};
use crate::policy::{decide, DecisionRule, LearnerOutput, PolicyInput, PolicyNetwork, RuleVariant};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// MPC with the true state and the true parameters.
    MpcSi,
    /// MPC on the moving-horizon estimate, with the training parameters.
    MpcSe,
    Learner(RuleVariant),
}

impl PolicyKind {
    /// Canonical reporting order.
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::MpcSi,
        PolicyKind::MpcSe,
        PolicyKind::Learner(RuleVariant::Dlp),
        PolicyKind::Learner(RuleVariant::SlpMean),
        PolicyKind::Learner(RuleVariant::SlpAdaptive),
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PolicyKind::MpcSi => "MPC+SI",
            PolicyKind::MpcSe => "MPC+SE",
            PolicyKind::Learner(r) => r.tag(),
        }
    }

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            PolicyKind::MpcSi => "mpc-si",
            PolicyKind::MpcSe => "mpc-se",
            PolicyKind::Learner(RuleVariant::Dlp) => "dlp",
            PolicyKind::Learner(RuleVariant::SlpMean) => "slp-m",
            PolicyKind::Learner(RuleVariant::SlpAdaptive) => "slp-a",
        }
    }

    pub fn needs_network(self) -> bool {
        matches!(self, PolicyKind::Learner(_))
    }

    pub fn rank(self) -> usize {
        PolicyKind::ALL.iter().position(|p| *p == self).expect("listed")
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.cli_name() == l || p.tag().to_ascii_lowercase() == l)
            .ok_or_else(|| Error::Config(format!("unknown policy '{s}' (expected mpc-si, mpc-se, dlp, slp-m or slp-a)")))
    }
}

/// Everything a test rollout needs besides the policy.
#[derive(Debug, Clone)]
pub struct RolloutSetup {
    pub patient: PatientConfig,
    pub meals: MealDistributionSpec,
    /// Base seed of the evaluation; rollout `i` uses sub-streams `i`.
    pub seed: u64,
    pub horizon_steps: usize,
    pub sensor: SensorConfig,
    pub variability: VariabilitySpec,
    /// Basal is filled in per controller.
    pub mpc: MpcConfig,
    pub mhe: MheConfig,
    pub samples: usize,
    /// λ the learner and MPC+SE were built for.
    pub training_params: PatientParameters,
}

impl RolloutSetup {
    pub fn new(patient: PatientConfig, meals: MealDistributionSpec, seed: u64) -> Self {
        RolloutSetup {
            patient,
            meals,
            seed,
            horizon_steps: 288,
            sensor: SensorConfig::default(),
            variability: VariabilitySpec::default(),
            mpc: MpcConfig::default(),
            mhe: MheConfig::default(),
            samples: crate::policy::DEFAULT_SAMPLES,
            training_params: PatientParameters::constant(ModelConstants::default()),
        }
    }

    /// The patient of rollout `index`.
    pub fn patient_params(&self, index: u64) -> PatientParameters {
        let base = PatientParameters::constant(ModelConstants::default());
        sample_patient_params(self.patient, &base, &self.variability, &mut stream(self.seed, Stream::PatientParams, index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub policy: String,
    pub patient: String,
    pub seed: u64,
    pub index: u64,
    /// Minutes since the start.
    pub t: Vec<f64>,
    pub bg: Vec<f64>,
    pub cgm: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    /// Sorted predictive samples per step; empty for deterministic policies.
    pub samples: Vec<Vec<f64>>,
    /// Wall time spent computing each action, seconds.
    pub step_seconds: Vec<f64>,
}

impl RolloutRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV `t,bg,cgm,u,d[,s1..sn]`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let n = self.samples.first().map_or(0, |s| s.len());
        let mut header: Vec<String> = ["t", "bg", "cgm", "u", "d"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=n).map(|i| format!("s{i}")));
        wtr.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![
                self.t[k].to_string(),
                self.bg[k].to_string(),
                self.cgm[k].to_string(),
                self.u[k].to_string(),
                self.d[k].to_string(),
            ];
            if n > 0 {
                row.extend(self.samples[k].iter().map(|v| v.to_string()));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Runs rollout `index` of `setup` under `policy`.
///
/// Patient parameters, meals and sensor noise come from their own streams
/// keyed only by `(setup.seed, index)`, so every policy sees the same day.
pub fn rollout(
    policy: PolicyKind,
    learner: Option<&PolicyNetwork>,
    setup: &RolloutSetup,
    index: u64,
) -> Result<RolloutRecord> {
    let net = match (policy.needs_network(), learner) {
        (true, None) => return Err(Error::Config(format!("{policy} needs a trained network"))),
        (true, Some(n)) => Some(n),
        (false, _) => None,
    };
    let dt = setup.sensor.cgm_period;
    let h = setup.horizon_steps;
    let np = setup.mpc.prediction_horizon;
    let plant = PatientModel::new(setup.patient_params(index), dt);
    let (true_basal, x0) = plant.basal_equilibrium(setup.mpc.target_bg)?;
    let trace = sample_meal_schedule(&setup.meals, h + np, dt, &mut stream(setup.seed, Stream::Meals, index))?;
    let mut sensor_rng = stream(setup.seed, Stream::SensorNoise, index);
    let mut policy_rng = stream(setup.seed, Stream::Policy, index);
    let mut solver_rng = stream(setup.seed, Stream::Solver, index);

    let model = PatientModel::new(setup.training_params.clone(), dt);
    let (model_basal, model_eq) = model.basal_equilibrium(setup.mpc.target_bg)?;
    let mpc_si = setup.mpc.clone().with_basal(true_basal);
    let mpc_se = setup.mpc.clone().with_basal(model_basal);
    let mut mhe = match policy {
        PolicyKind::MpcSe => Some(MovingHorizonEstimator::new(model.clone(), setup.mhe.clone(), model_eq, 0.0)?),
        _ => None,
    };
    let rule = match policy {
        PolicyKind::Learner(v) => Some(DecisionRule { samples: setup.samples, ..DecisionRule::new(v) }),
        _ => None,
    };
    if let Some(r) = &rule {
        r.validate()?;
    }
    let mut hidden = net.map(|n| n.zero_state());

    let mut rec = RolloutRecord {
        policy: policy.tag().into(),
        patient: setup.patient.tag().into(),
        seed: setup.seed,
        index,
        t: Vec::with_capacity(h),
        bg: Vec::with_capacity(h),
        cgm: Vec::with_capacity(h),
        u: Vec::with_capacity(h),
        d: Vec::with_capacity(h),
        samples: Vec::new(),
        step_seconds: Vec::with_capacity(h),
    };
    let mut x = x0;
    let mut u_prev = match policy {
        PolicyKind::MpcSi => true_basal,
        _ => model_basal,
    };
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..h {
        let at = |e: Error| e.context(format!("{policy} rollout {index}, step {k}"));
        let t_min = k as f64 * dt;
        let y = cgm_observe(&x, &plant.constants_at(t_min), &setup.sensor, &mut sensor_rng);
        let started = Instant::now();
        let u = match policy {
            PolicyKind::MpcSi | PolicyKind::MpcSe => {
                let (model_ref, state, cfg) = match mhe.as_mut() {
                    Some(est) => (&model, est.observe(y).map_err(at)?, &mpc_se),
                    None => (&plant, x, &mpc_si),
                };
                let d = trace.window(k, np);
                let problem = MpcProblem { plant: model_ref, x0: state, t0: t_min, disturbances: &d, u_prev, cfg };
                let sol = solve_supervision(&problem, warm.as_deref(), &mut solver_rng).map_err(at)?;
                warm = Some(sol.sequence);
                sol.u
            }
            PolicyKind::Learner(variant) => {
                let net = net.expect("checked above");
                let s = hidden.as_ref().expect("learner state");
                let input = PolicyInput { u_prev, y, d_future: trace.at(k + np) };
                let rule = rule.as_ref().expect("learner rule");
                let (next, value) = net.forward_deterministic(s, &input).map_err(at)?;
                let u = if variant.is_stochastic() {
                    let samples = net.sample_predictive(s, &input, rule.samples, &mut policy_rng).map_err(at)?;
                    let u = decide(rule, LearnerOutput::Samples(&samples), y, net.u_max).map_err(at)?;
                    rec.samples.push(samples);
                    u
                } else {
                    decide(rule, LearnerOutput::Value(value), y, net.u_max).map_err(at)?
                };
                hidden = Some(next);
                u
            }
        };
        rec.step_seconds.push(started.elapsed().as_secs_f64());
        if let Some(est) = mhe.as_mut() {
            est.apply(u, trace.at(k));
        }
        rec.t.push(t_min);
        rec.bg.push(plant.bg(&x, t_min));
        rec.cgm.push(y);
        rec.u.push(u);
        rec.d.push(trace.at(k));
        x = plant.advance(&x, t_min, u, trace.at(k)).map_err(at)?;
        u_prev = u;
    }
    Ok(rec)
}

/// Rollouts `0..count` in parallel on the current rayon pool.
pub fn rollouts(
    policy: PolicyKind,
    learner: Option<&PolicyNetwork>,
    setup: &RolloutSetup,
    count: usize,
) -> Result<Vec<RolloutRecord>> {
    use rayon::prelude::*;
    (0..count as u64).into_par_iter().map(|i| rollout(policy, learner, setup, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(meals: MealDistributionSpec) -> RolloutSetup {
        let mut s = RolloutSetup::new(PatientConfig::Fixed, meals, 11);
        s.horizon_steps = 24;
        s.mpc.solver.restarts = 0;
        s
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.cli_name().parse::<PolicyKind>().unwrap(), p);
            assert_eq!(p.tag().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("pid".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn learner_policies_require_a_network() {
        let s = setup(MealDistributionSpec::training());
        assert!(rollout(PolicyKind::Learner(RuleVariant::Dlp), None, &s, 0).is_err());
    }

    #[test]
    fn matched_seeds_share_the_day_across_policies() {
        let s = setup(MealDistributionSpec::training());
        let a = rollout(PolicyKind::MpcSi, None, &s, 3).unwrap();
        let b = rollout(PolicyKind::MpcSe, None, &s, 3).unwrap();
        assert_eq!(a.d, b.d);
        assert_eq!(a.bg[0], b.bg[0]);
        assert_eq!(a.len(), 24);
    }

    #[test]
    fn csv_has_sample_columns_only_when_sampling() {
        let mut r = RolloutRecord {
            policy: "SLP-A".into(),
            patient: "fixed".into(),
            seed: 0,
            index: 0,
            t: vec![0.0],
            bg: vec![110.0],
            cgm: vec![111.0],
            u: vec![6.0],
            d: vec![0.0],
            samples: vec![vec![5.0, 7.0]],
            step_seconds: vec![0.0],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,bg,cgm,u,d,s1,s2\n0,110,111,6,0,5,7\n"));
        r.samples.clear();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,bg,cgm,u,d\n"));
    }
}
