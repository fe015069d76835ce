use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mpc::{solve_matching_problem, Matching, MpcProblem, MpcSolution};
use super::plant::Plant;
use crate::error::{Error, Result};
use crate::policy::{HiddenState, PolicyInput, PolicyNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    /// Matching weight ρ of the current iteration.
    pub rho: f64,
    /// Learner samples per control step.
    pub samples: usize,
    /// Wasserstein order.
    pub order: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig { rho: 0.0, samples: crate::policy::DEFAULT_SAMPLES, order: 1.0 }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if self.samples == 0 {
            return Err(Error::Config("teacher needs at least one learner sample".into()));
        }
        if !(self.order >= 1.0) {
            return Err(Error::Config(format!("Wasserstein order must be >= 1, got {}", self.order)));
        }
        Ok(())
    }
}

/// Adaptive teacher: draws `tcfg.samples` MC-dropout actions from the
/// learner at `(state, input)` once, then minimises `J + ρ·W_p` with those
/// samples held fixed. `warm` should be the supervision sequence at the
/// same plant state.
pub fn solve_adaptive_teacher<P: Plant, R: Rng>(
    problem: &MpcProblem<'_, P>,
    learner: &PolicyNetwork,
    state: &HiddenState,
    input: &PolicyInput,
    tcfg: &TeacherConfig,
    warm: Option<&[f64]>,
    rng: &mut R,
) -> Result<(MpcSolution, Vec<f64>)> {
    tcfg.validate()?;
    let samples = learner.sample_predictive(state, input, tcfg.samples, rng)?;
    let m = Matching { rho: tcfg.rho, samples: &samples, order: tcfg.order };
    let sol = solve_matching_problem(problem, m, warm, rng, false)?;
    Ok((sol, samples))
}
