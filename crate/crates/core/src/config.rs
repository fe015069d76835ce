//! Experiment configuration: one TOML file per experiment.
//!
//! Values come from the built-in defaults, then the file, then command-line
//! overrides, each layer replacing the previous one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::MheConfig;
use crate::error::{Error, Result};
use crate::eval::RolloutSetup;
use crate::imitation::IlConfig;
use crate::patient::{MealDistributionSpec, PatientConfig};
use crate::policy::Architecture;

/// Test-time settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub patient: PatientConfig,
    pub meals: String,
    /// Base seed of the test rollouts; keep it apart from the training seed.
    pub seed: u64,
    pub rollouts: usize,
    pub horizon_steps: usize,
    /// MC-dropout samples for the stochastic rules.
    pub samples: usize,
    /// Significance level for bold marks in reports.
    pub alpha: f64,
    pub mhe: MheConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            patient: PatientConfig::Fixed,
            meals: "training".into(),
            seed: 1000,
            rollouts: 30,
            horizon_steps: 288,
            samples: crate::policy::DEFAULT_SAMPLES,
            alpha: 0.005,
            mhe: MheConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub training: IlConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { out: PathBuf::from("runs/default"), training: IlConfig::default(), eval: EvalConfig::default() }
    }
}

impl ExperimentConfig {
    /// The full-scale setup: 34 iterations of 1440-step episodes, a 3×200 net.
    pub fn full() -> Self {
        ExperimentConfig { out: PathBuf::from("runs/full"), ..Default::default() }
    }

    /// Ten iterations of full-length episodes, a 2×64 net and a trimmed
    /// solver budget. About 25 minutes for IL and SL on one core.
    pub fn desk() -> Self {
        let mut c = ExperimentConfig { out: PathBuf::from("runs/desk"), ..Default::default() };
        c.training.iterations = 10;
        c.training.architecture = Architecture::desk();
        c.training.mpc.solver.restarts = 0;
        c.training.mpc.solver.max_iter = 60;
        c.training.mpc.solver.stall_tol = 1e-6;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate().map_err(|e| e.context("[training]"))?;
        let e = &self.eval;
        let bad = |m: String| Err(Error::Config(m).context("[eval]"));
        if e.rollouts == 0 || e.horizon_steps == 0 || e.samples == 0 {
            return bad("rollouts, horizon_steps and samples must be >= 1".into());
        }
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", e.alpha));
        }
        MealDistributionSpec::resolve(&e.meals).map_err(|e| e.context("[eval] meals"))?;
        Ok(())
    }

    /// Rollout setup for the test phase. The learner and MPC+SE are built on
    /// the training patient.
    pub fn rollout_setup(&self) -> Result<RolloutSetup> {
        let meals = MealDistributionSpec::resolve(&self.eval.meals)?;
        let mut s = RolloutSetup::new(self.eval.patient, meals, self.eval.seed);
        s.horizon_steps = self.eval.horizon_steps;
        s.sensor = self.training.sensor;
        s.variability = self.training.variability;
        s.mpc = self.training.mpc.clone();
        s.mhe = self.eval.mhe.clone();
        s.samples = self.eval.samples;
        s.training_params = self.training.training_patient();
        Ok(s)
    }
}
