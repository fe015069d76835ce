//! The imitation-learning loop and its supervised-learning baseline.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, TrainingExample};
use crate::control::{
    solve_matching_problem, solve_supervision, Matching, MpcConfig, MpcProblem, MpcSolution, Plant, SolveStatus,
};
use crate::error::{Error, Result};
use crate::patient::{
    cgm_observe, sample_meal_schedule, sample_patient_params, with_bg, MealDistributionSpec, ModelConstants,
    PatientConfig, PatientModel, PatientParameters, SensorConfig, VariabilitySpec,
};
use crate::policy::{train, Adam, Architecture, Normalization, PolicyInput, PolicyNetwork, TrainConfig, INPUT_DIM};
use crate::rng::{stream, Stream};

/// `ρ_i = 1 − base^{i−1}` for 1-based iteration `i`.
pub fn rho_schedule(iteration: usize, base: f64) -> f64 {
    assert!(iteration >= 1, "iterations are 1-based");
    1.0 - base.powi(iteration as i32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Plant driven by the adaptive teacher.
    #[default]
    Il,
    /// Plant driven by the supervision policy.
    Sl,
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "il" => Ok(TrainingMode::Il),
            "sl" => Ok(TrainingMode::Sl),
            _ => Err(Error::Config(format!("unknown training mode '{s}' (expected il or sl)"))),
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMode::Il => "il",
            TrainingMode::Sl => "sl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlConfig {
    pub iterations: usize,
    /// Control steps per episode.
    pub episode_steps: usize,
    pub rho_base: f64,
    /// Overrides the schedule with a constant matching weight when set.
    pub rho_override: Option<f64>,
    /// Half-width of the uniform BG perturbation of each episode's start, mg/dL.
    pub init_bg_spread: f64,
    /// Population the training patient is drawn from. Intra-day variation
    /// is dropped: the training patient is time-constant.
    pub patient: PatientConfig,
    pub meals: String,
    pub seed: u64,
    pub architecture: Architecture,
    pub dropout: f64,
    pub train: TrainConfig,
    pub teacher_samples: usize,
    pub wasserstein_order: f64,
    pub mpc: MpcConfig,
    pub sensor: SensorConfig,
    pub variability: VariabilitySpec,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig {
            iterations: 34,
            episode_steps: 1440,
            rho_base: 0.8,
            rho_override: None,
            init_bg_spread: 20.0,
            patient: PatientConfig::Fixed,
            meals: "training".into(),
            seed: 0,
            architecture: Architecture::full(),
            dropout: 0.2,
            train: TrainConfig::default(),
            teacher_samples: crate::policy::DEFAULT_SAMPLES,
            wasserstein_order: 1.0,
            mpc: MpcConfig::default(),
            sensor: SensorConfig::default(),
            variability: VariabilitySpec::default(),
        }
    }
}

impl IlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.episode_steps == 0 {
            return Err(Error::Config("iterations and episode_steps must be >= 1".into()));
        }
        if !(self.rho_base > 0.0 && self.rho_base < 1.0) {
            return Err(Error::Config(format!("rho_base must be in (0, 1), got {}", self.rho_base)));
        }
        if let Some(r) = self.rho_override {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("rho_override must be >= 0, got {r}")));
            }
        }
        if !(self.init_bg_spread >= 0.0) {
            return Err(Error::Config("init_bg_spread must be >= 0".into()));
        }
        if self.teacher_samples == 0 || !(self.wasserstein_order >= 1.0) {
            return Err(Error::Config("teacher needs >= 1 sample and Wasserstein order >= 1".into()));
        }
        self.architecture.validate()?;
        self.train.validate()?;
        self.mpc.validate_static()?;
        self.sensor.validate()?;
        self.variability.validate()?;
        MealDistributionSpec::resolve(&self.meals)?;
        Ok(())
    }

    pub fn rho(&self, iteration: usize) -> f64 {
        self.rho_override.unwrap_or_else(|| rho_schedule(iteration, self.rho_base))
    }

    /// The time-constant training patient λ.
    pub fn training_patient(&self) -> PatientParameters {
        let mut rng = stream(self.seed, Stream::PatientParams, 0);
        let drawn = sample_patient_params(
            self.patient,
            &PatientParameters::constant(ModelConstants::default()),
            &self.variability,
            &mut rng,
        );
        PatientParameters::constant(drawn.baseline())
    }
}

/// Per-iteration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub rho: f64,
    pub dataset_size: usize,
    pub epoch_losses: Vec<f64>,
    /// Mean |u^T − u*| over the episode.
    pub mean_action_gap: f64,
    /// Mean learner-matching penalty J_M of the applied action.
    pub mean_matching: f64,
    /// Mean J(u^T sequence) − J(u* sequence).
    pub mean_cost_excess: f64,
    /// Solves that hit the iteration cap.
    pub unconverged_solves: usize,
    /// Episode BG statistics under the applied actions.
    pub episode_time_in_range: f64,
    pub generation_seconds: f64,
    pub training_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct IlOutcome {
    pub network: PolicyNetwork,
    pub dataset: Dataset,
    pub logs: Vec<IterationLog>,
    /// Basal rate of the training patient, mU/min.
    pub basal: f64,
}

pub fn run_il(cfg: &IlConfig, hook: &mut dyn FnMut(&IterationLog, &PolicyNetwork) -> Result<()>) -> Result<IlOutcome> {
    run(cfg, TrainingMode::Il, hook)
}

pub fn run_sl_baseline(
    cfg: &IlConfig,
    hook: &mut dyn FnMut(&IterationLog, &PolicyNetwork) -> Result<()>,
) -> Result<IlOutcome> {
    run(cfg, TrainingMode::Sl, hook)
}

pub fn run_training(
    cfg: &IlConfig,
    mode: TrainingMode,
    hook: &mut dyn FnMut(&IterationLog, &PolicyNetwork) -> Result<()>,
) -> Result<IlOutcome> {
    run(cfg, mode, hook)
}

fn run(cfg: &IlConfig, mode: TrainingMode, hook: &mut dyn FnMut(&IterationLog, &PolicyNetwork) -> Result<()>) -> Result<IlOutcome> {
    cfg.validate()?;
    let meals = MealDistributionSpec::resolve(&cfg.meals)?;
    let params = cfg.training_patient();
    let plant = PatientModel::new(params, cfg.sensor.cgm_period);
    let (basal, x_eq) = plant.basal_equilibrium(cfg.mpc.target_bg)?;
    let mpc = cfg.mpc.clone().with_basal(basal);
    mpc.validate()?;
    let lambda = plant.params().baseline();

    let mut net = PolicyNetwork::new(cfg.architecture, cfg.dropout, mpc.u_max, &mut stream(cfg.seed, Stream::Network, 0))?;
    let mut adam = Adam::new(net.num_params());
    let mut dataset = Dataset::new();
    let mut logs = Vec::with_capacity(cfg.iterations);
    let np = mpc.prediction_horizon;
    let dt = plant.step_min();

    for it in 1..=cfg.iterations {
        let started = Instant::now();
        let rho = match mode {
            TrainingMode::Il => cfg.rho(it),
            TrainingMode::Sl => 0.0,
        };
        let idx = it as u64;
        let trace = sample_meal_schedule(&meals, cfg.episode_steps + np, dt, &mut stream(cfg.seed, Stream::Meals, idx))?;
        let mut init_rng = stream(cfg.seed, Stream::InitialState, idx);
        let bg0 = mpc.target_bg + cfg.init_bg_spread * (2.0 * init_rng.gen::<f64>() - 1.0);
        let mut x = with_bg(&lambda, &x_eq, bg0);
        let mut sensor_rng = stream(cfg.seed, Stream::SensorNoise, idx);
        let mut solver_rng = stream(cfg.seed, Stream::Solver, idx);
        let mut policy_rng = stream(cfg.seed, Stream::Policy, idx);
        let use_teacher = mode == TrainingMode::Il && rho > 0.0 && it > 1;

        let mut hidden = net.zero_state();
        let mut u_prev = basal;
        let mut warm: Option<Vec<f64>> = None;
        let (mut gap, mut matching, mut excess) = (0.0, 0.0, 0.0);
        let mut unconverged = 0;
        let mut in_range = 0usize;
        for t in 0..cfg.episode_steps {
            let at = |e: Error| e.context(format!("iteration {it}, step {t}"));
            let t_min = t as f64 * dt;
            let y = cgm_observe(&x, &plant.constants_at(t_min), &cfg.sensor, &mut sensor_rng);
            let d_future = trace.window(t, np);
            let input = PolicyInput { u_prev, y, d_future: trace.at(t + np) };
            let problem = MpcProblem { plant: &plant, x0: x, t0: t_min, disturbances: &d_future, u_prev, cfg: &mpc };
            let mut star = solve_supervision(&problem, warm.as_deref(), &mut solver_rng).map_err(at)?;
            unconverged += usize::from(star.status == SolveStatus::MaxIterations);

            let applied = if use_teacher {
                let samples = net.sample_predictive(&hidden, &input, cfg.teacher_samples, &mut policy_rng).map_err(at)?;
                let m = Matching { rho, samples: &samples, order: cfg.wasserstein_order };
                let teacher = solve_matching_problem(&problem, m, Some(&star.sequence), &mut solver_rng, false).map_err(at)?;
                unconverged += usize::from(teacher.status == SolveStatus::MaxIterations);
                if teacher.cost < star.cost {
                    // the teacher's plan is better for J alone: polish it as the label
                    star = refine(&problem, &teacher, star, &mut solver_rng).map_err(at)?;
                }
                matching += crate::control::wasserstein_penalty(teacher.u, &samples, cfg.wasserstein_order)?;
                excess += teacher.cost - star.cost;
                teacher.u
            } else {
                star.u
            };
            gap += (applied - star.u).abs();

            dataset
                .push(TrainingExample { episode: it - 1, step: t, y, u_prev, d_hz: input.d_future, label: star.u })
                .map_err(at)?;
            if it > 1 {
                hidden = net.forward_deterministic(&hidden, &input).map_err(at)?.0;
            }
            x = plant.advance(&x, t_min, applied, trace.at(t)).map_err(at)?;
            let bg = plant.bg(&x, t_min + dt);
            in_range += usize::from(bg > 70.0 && bg < 180.0);
            u_prev = applied;
            warm = Some(star.sequence);
        }
        let generation_seconds = started.elapsed().as_secs_f64();

        if it == 1 {
            let xs: Vec<[f64; INPUT_DIM]> = dataset.examples().iter().map(|e| [e.u_prev, e.y, e.d_hz]).collect();
            let ys: Vec<f64> = dataset.examples().iter().map(|e| e.label).collect();
            net.norm = Normalization::fit(&xs, &ys)?;
        }
        let trained = Instant::now();
        let losses = train(&mut net, &mut adam, &dataset.episodes(), &cfg.train, &mut stream(cfg.seed, Stream::Training, idx))
            .map_err(|e| e.context(format!("training after iteration {it}")))?;
        let n = cfg.episode_steps as f64;
        let log = IterationLog {
            iteration: it,
            rho,
            dataset_size: dataset.len(),
            epoch_losses: losses,
            mean_action_gap: gap / n,
            mean_matching: matching / n,
            mean_cost_excess: excess / n,
            unconverged_solves: unconverged,
            episode_time_in_range: 100.0 * in_range as f64 / n,
            generation_seconds,
            training_seconds: trained.elapsed().as_secs_f64(),
        };
        hook(&log, &net)?;
        logs.push(log);
    }
    Ok(IlOutcome { network: net, dataset, logs, basal })
}

/// Local re-solve of the supervision problem from the teacher's plan.
fn refine(
    problem: &MpcProblem<'_, PatientModel>,
    teacher: &MpcSolution,
    star: MpcSolution,
    rng: &mut impl Rng,
) -> Result<MpcSolution> {
    let none = [problem.cfg.basal];
    let m = Matching { rho: 0.0, samples: &none, order: 1.0 };
    let polished = solve_matching_problem(problem, m, Some(&teacher.sequence), rng, false)?;
    Ok(if polished.cost < star.cost { polished } else { star })
}
