//! Single-shooting moving horizon estimation: fit the state at the start of
//! a short window of CGM samples, then propagate it to the present.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::plant::Plant;
use super::solver::{minimize_box, BoxObjective, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::patient::{idx, PatientModel, PatientState, SensorSite, STATE_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MheConfig {
    /// Look-back window N_b, control steps.
    pub window: usize,
    pub output_weight: f64,
    /// Weight on the squared, scale-normalised distance to the prior.
    pub prior_weight: f64,
    /// Which glucose signal the CGM samples are assumed to read.
    pub site: SensorSite,
    pub solver: SolverConfig,
}

impl Default for MheConfig {
    fn default() -> Self {
        MheConfig {
            window: 6,
            output_weight: 1.0,
            prior_weight: 1e-2,
            site: SensorSite::Plasma,
            solver: SolverConfig {
                max_iter: 100,
                grad_tol: 1e-6,
                restarts: 0,
                ..SolverConfig::default()
            },
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("MHE window must be >= 1".into()));
        }
        if !(self.output_weight >= 0.0 && self.prior_weight >= 0.0) {
            return Err(Error::Config("MHE weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Gut compartments sit at zero in equilibrium; this is their working scale, mmol.
const GUT_SCALE: f64 = 20.0;
/// Upper bound of each state in units of its scale.
const SCALED_UPPER: f64 = 50.0;

/// Per-compartment scale used for the decision variables and the prior norm.
pub fn state_scale(reference: &PatientState) -> [f64; STATE_DIM] {
    let mut s = [1.0; STATE_DIM];
    for (i, v) in s.iter_mut().enumerate() {
        *v = reference[i].abs().max(1e-6);
    }
    for i in [idx::D1_FAST, idx::D2_FAST, idx::D1_SLOW, idx::D2_SLOW] {
        s[i] = s[i].max(GUT_SCALE);
    }
    s
}

#[derive(Debug, Clone)]
pub struct MheSolution {
    /// Estimate at the newest sample.
    pub state: PatientState,
    /// Estimate at the oldest sample in the window.
    pub window_start: PatientState,
    /// Propagated states, one per sample.
    pub trajectory: Vec<PatientState>,
    pub cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

struct MheObjective<'a> {
    model: &'a PatientModel,
    t_start: f64,
    y: &'a [f64],
    u: &'a [f64],
    d: &'a [f64],
    prior: &'a PatientState,
    scale: &'a [f64; STATE_DIM],
    cfg: &'a MheConfig,
}

impl MheObjective<'_> {
    fn unscale(&self, z: &[f64]) -> PatientState {
        let mut x = PatientState::zeros();
        for i in 0..STATE_DIM {
            x[i] = z[i] * self.scale[i];
        }
        x
    }

    fn output(&self, x: &PatientState, t: f64) -> f64 {
        match self.cfg.site {
            SensorSite::Plasma => self.model.bg(x, t),
            SensorSite::Interstitial => x.sensor_glucose(),
        }
    }

    fn trajectory(&self, x0: PatientState) -> Result<Vec<PatientState>> {
        let dt = self.model.step_min();
        let mut out = Vec::with_capacity(self.y.len());
        out.push(x0);
        for k in 0..self.u.len() {
            let next = self.model.advance(&out[k], self.t_start + k as f64 * dt, self.u[k], self.d[k])?;
            out.push(next);
        }
        Ok(out)
    }

    fn cost_of(&self, traj: &[PatientState], z: &[f64]) -> f64 {
        let dt = self.model.step_min();
        let fit: f64 = traj
            .iter()
            .zip(self.y)
            .enumerate()
            .map(|(k, (x, y))| {
                let r = y - self.output(x, self.t_start + k as f64 * dt);
                r * r
            })
            .sum();
        // distance to the prior in model units, not the solver's scaled ones
        let prior: f64 = (0..STATE_DIM)
            .map(|i| {
                let e = z[i] * self.scale[i] - self.prior[i];
                e * e
            })
            .sum();
        self.cfg.output_weight * fit + self.cfg.prior_weight * prior
    }
}

impl BoxObjective for MheObjective<'_> {
    fn dim(&self) -> usize {
        STATE_DIM
    }

    fn value(&mut self, z: &[f64]) -> Result<f64> {
        let traj = self.trajectory(self.unscale(z))?;
        Ok(self.cost_of(&traj, z))
    }
}

/// Estimates the state at the newest sample of a window.
///
/// `y` holds the samples at `t_start, t_start + Δt, …`; `u` and `d` hold
/// the insulin and carbohydrate applied between consecutive samples, so
/// both are one shorter than `y`. The decision variable is the state at
/// `t_start`, started from `warm` (or the prior) and bounded below by zero.
pub fn mhe_estimate(
    model: &PatientModel,
    t_start: f64,
    y: &[f64],
    u: &[f64],
    d: &[f64],
    prior: &PatientState,
    warm: Option<&PatientState>,
    scale: &[f64; STATE_DIM],
    cfg: &MheConfig,
) -> Result<MheSolution> {
    cfg.validate()?;
    if y.is_empty() || u.len() + 1 != y.len() || d.len() != u.len() {
        return Err(Error::Shape(format!(
            "MHE needs |u| = |d| = |y| - 1 >= 0, got |y| = {}, |u| = {}, |d| = {}",
            y.len(),
            u.len(),
            d.len()
        )));
    }
    let mut obj = MheObjective { model, t_start, y, u, d, prior, scale, cfg };
    let start = warm.unwrap_or(prior);
    let z0: Vec<f64> = (0..STATE_DIM).map(|i| start[i] / scale[i]).collect();
    let lo = vec![0.0; STATE_DIM];
    let hi = vec![SCALED_UPPER; STATE_DIM];
    let m = minimize_box(&mut obj, &z0, &lo, &hi, &cfg.solver, false)?;
    let x0 = obj.unscale(&m.x);
    let trajectory = obj.trajectory(x0)?;
    Ok(MheSolution {
        state: *trajectory.last().expect("non-empty"),
        window_start: x0,
        trajectory,
        cost: m.value,
        status: m.status,
        iterations: m.iterations,
    })
}

/// Running estimator fed one sample and one applied input per control step.
///
/// The prior for each new window start is the previous solve's propagated
/// state at that time; before the window fills, it is the initial guess.
#[derive(Debug, Clone)]
pub struct MovingHorizonEstimator {
    model: PatientModel,
    cfg: MheConfig,
    scale: [f64; STATE_DIM],
    y: VecDeque<f64>,
    u: VecDeque<f64>,
    d: VecDeque<f64>,
    t_start: f64,
    prior: PatientState,
    last: Option<MheSolution>,
}

impl MovingHorizonEstimator {
    pub fn new(model: PatientModel, cfg: MheConfig, initial_guess: PatientState, t0: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(MovingHorizonEstimator {
            scale: state_scale(&initial_guess),
            model,
            cfg,
            y: VecDeque::new(),
            u: VecDeque::new(),
            d: VecDeque::new(),
            t_start: t0,
            prior: initial_guess,
            last: None,
        })
    }

    pub fn last(&self) -> Option<&MheSolution> {
        self.last.as_ref()
    }

    /// Adds the sample taken now and returns the current state estimate.
    pub fn observe(&mut self, y: f64) -> Result<PatientState> {
        if self.u.len() != self.y.len() {
            return Err(Error::Shape("MHE expects one applied input between samples".into()));
        }
        self.y.push_back(y);
        let mut warm = self.last.as_ref().map(|s| s.window_start);
        if self.y.len() > self.cfg.window + 1 {
            self.y.pop_front();
            self.u.pop_front();
            self.d.pop_front();
            self.t_start += self.model.step_min();
            if let Some(last) = &self.last {
                self.prior = last.trajectory[1];
                warm = Some(self.prior);
            }
        }
        let (y, u, d) = (self.y.make_contiguous().to_vec(), self.u.make_contiguous().to_vec(), self.d.make_contiguous().to_vec());
        let sol = mhe_estimate(&self.model, self.t_start, &y, &u, &d, &self.prior, warm.as_ref(), &self.scale, &self.cfg)?;
        let x = sol.state;
        self.last = Some(sol);
        Ok(x)
    }

    /// Records the insulin and carbohydrate applied over the step just taken.
    pub fn apply(&mut self, u: f64, carbs_g: f64) {
        self.u.push_back(u);
        self.d.push_back(carbs_g);
    }
}
