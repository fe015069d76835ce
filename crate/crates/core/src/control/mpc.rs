//! Nonlinear MPC: trajectory prediction, the tracking cost, and the
//! supervision and adaptive-teacher policies built on it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::plant::Plant;
use super::solver::{minimize_multistart, BoxObjective, IterationRecord, SolveStatus, SolverConfig};
use super::wasserstein::wasserstein_penalty;
use crate::error::{Error, Result};
use crate::patient::MGDL_PER_MMOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon N_p, control steps.
    pub prediction_horizon: usize,
    /// Control horizon N_c ≤ N_p; inputs past it are held at basal.
    pub control_horizon: usize,
    /// Weight of squared insulin increments.
    pub beta: f64,
    /// Upper end of the admissible insulin interval [0, u_max], mU/min.
    pub u_max: f64,
    /// Basal rate ū, mU/min. Derived from the prediction model at run time.
    #[serde(skip)]
    pub basal: f64,
    pub target_bg: f64,
    pub w_hypo: f64,
    pub w_hyper: f64,
    pub solver: SolverConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            prediction_horizon: 30,
            control_horizon: 20,
            beta: 1e-3,
            u_max: 100.0,
            basal: 0.0,
            target_bg: 110.0,
            w_hypo: 4.0,
            w_hyper: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

impl MpcConfig {
    pub fn with_basal(mut self, basal: f64) -> Self {
        self.basal = basal;
        self
    }

    /// Checks everything except the run-time basal rate.
    pub fn validate_static(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1 <= self.control_horizon && self.control_horizon <= self.prediction_horizon) {
            return bad(format!(
                "need 1 <= N_c <= N_p, got N_c = {}, N_p = {}",
                self.control_horizon, self.prediction_horizon
            ));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.w_hypo >= self.w_hyper && self.w_hyper > 0.0) {
            return bad(format!("need w_hypo >= w_hyper > 0, got {} and {}", self.w_hypo, self.w_hyper));
        }
        if !(self.u_max > 0.0 && self.target_bg > 0.0) {
            return bad("u_max and target_bg must be positive".into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_static()?;
        if !(self.u_max > self.basal && self.basal > 0.0) {
            return Err(Error::Config(format!(
                "need u_max > basal > 0, got u_max = {}, basal = {}",
                self.u_max, self.basal
            )));
        }
        Ok(())
    }
}

/// Asymmetric squared deviation from target. Inputs are mg/dL; the
/// deviation is squared in mmol/L so that β = 1e-3 weighs Δu² on a par with
/// ordinary excursions.
#[inline]
pub fn d_bg(bg: f64, cfg: &MpcConfig) -> f64 {
    let low = (cfg.target_bg - bg).max(0.0) / MGDL_PER_MMOL;
    let high = (bg - cfg.target_bg).max(0.0) / MGDL_PER_MMOL;
    cfg.w_hypo * low * low + cfg.w_hyper * high * high
}

/// States `x̃_t, …, x̃_{t+n}` predicted from `x0` under the given inputs.
pub fn predict_trajectory<P: Plant>(
    plant: &P,
    x0: &P::State,
    t0: f64,
    u_seq: &[f64],
    d_seq: &[f64],
) -> Result<Vec<P::State>> {
    if u_seq.len() != d_seq.len() {
        return Err(Error::Shape(format!(
            "insulin sequence has {} steps, disturbance sequence {}",
            u_seq.len(),
            d_seq.len()
        )));
    }
    let dt = plant.step_min();
    let mut out = Vec::with_capacity(u_seq.len() + 1);
    out.push(x0.clone());
    for (k, (u, d)) in u_seq.iter().zip(d_seq).enumerate() {
        let next = plant.advance(&out[k], t0 + k as f64 * dt, *u, *d)?;
        out.push(next);
    }
    Ok(out)
}

fn smoothness(u: &[f64], u_prev: f64, cfg: &MpcConfig) -> f64 {
    let mut prev = u_prev;
    let mut s = 0.0;
    for &v in &u[..cfg.control_horizon] {
        s += (v - prev) * (v - prev);
        prev = v;
    }
    cfg.beta * s
}

/// Tracking cost `J = Σ_{k=1..N_p} d_BG(x̃_{t+k}) + β Σ_{k=0..N_c−1} (Δu_{t+k})²`,
/// with the first increment taken against `u_prev`.
pub fn mpc_cost<P: Plant>(
    plant: &P,
    x0: &P::State,
    t0: f64,
    d_seq: &[f64],
    u_seq: &[f64],
    u_prev: f64,
    cfg: &MpcConfig,
) -> Result<f64> {
    let np = cfg.prediction_horizon;
    if u_seq.len() != np || d_seq.len() < np {
        return Err(Error::Shape(format!(
            "cost needs {np} inputs and at least {np} disturbances, got {} and {}",
            u_seq.len(),
            d_seq.len()
        )));
    }
    let traj = predict_trajectory(plant, x0, t0, u_seq, &d_seq[..np])?;
    let dt = plant.step_min();
    let tracking: f64 = traj
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, x)| d_bg(plant.bg(x, t0 + k as f64 * dt), cfg))
        .sum();
    Ok(tracking + smoothness(u_seq, u_prev, cfg))
}

/// One MPC instance: where the prediction starts and what it knows.
#[derive(Debug)]
pub struct MpcProblem<'a, P: Plant> {
    pub plant: &'a P,
    pub x0: P::State,
    pub t0: f64,
    /// Known future carbohydrate per step, at least N_p long.
    pub disturbances: &'a [f64],
    /// Insulin applied at the previous step.
    pub u_prev: f64,
    pub cfg: &'a MpcConfig,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// First element of the optimal sequence, in [0, u_max].
    pub u: f64,
    /// The full N_p-step input sequence.
    pub sequence: Vec<f64>,
    /// Tracking cost J of `sequence`.
    pub cost: f64,
    /// Matching penalty J_M (zero for the supervision policy).
    pub matching: f64,
    /// Minimised objective `J + ρ·J_M`.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<IterationRecord>,
}

impl MpcSolution {
    pub fn converged(&self) -> bool {
        self.status != SolveStatus::MaxIterations
    }
}

/// Learner-matching term of the adaptive teacher.
#[derive(Debug, Clone, Copy)]
pub struct Matching<'a> {
    pub rho: f64,
    pub samples: &'a [f64],
    pub order: f64,
}

/// `J + ρ·J_M` over the normalised control moves `v ∈ [0,1]^{N_c}`.
struct MpcObjective<'a, P: Plant> {
    problem: &'a MpcProblem<'a, P>,
    matching: Option<Matching<'a>>,
    u: Vec<f64>,
    scratch: Vec<f64>,
    states: Vec<P::State>,
    suffix: Vec<f64>,
}

impl<'a, P: Plant> MpcObjective<'a, P> {
    fn new(problem: &'a MpcProblem<'a, P>, matching: Option<Matching<'a>>) -> Self {
        let np = problem.cfg.prediction_horizon;
        MpcObjective {
            problem,
            matching,
            u: vec![problem.cfg.basal; np],
            scratch: vec![problem.cfg.basal; np],
            states: Vec::with_capacity(np + 1),
            suffix: vec![0.0; np + 1],
        }
    }

    fn fill(&mut self, v: &[f64]) {
        let cfg = self.problem.cfg;
        for (k, u) in self.u.iter_mut().enumerate() {
            *u = if k < cfg.control_horizon { v[k] * cfg.u_max } else { cfg.basal };
        }
    }

    fn matching_penalty(&self, u0: f64) -> f64 {
        match self.matching {
            Some(m) if m.rho != 0.0 => {
                m.rho * wasserstein_penalty(u0, m.samples, m.order).expect("samples checked at construction")
            }
            _ => 0.0,
        }
    }

    /// Tracking cost of steps `k0+1..=N_p` from `x` under `u`.
    fn tail(&self, k0: usize, x: &P::State, u: &[f64]) -> Result<f64> {
        let p = self.problem;
        let dt = p.plant.step_min();
        let mut x = x.clone();
        let mut s = 0.0;
        for k in k0..p.cfg.prediction_horizon {
            x = p.plant.advance(&x, p.t0 + k as f64 * dt, u[k], p.disturbances[k])?;
            s += d_bg(p.plant.bg(&x, p.t0 + (k + 1) as f64 * dt), p.cfg);
        }
        Ok(s)
    }

    fn sequence_value(&self, u: &[f64]) -> Result<(f64, f64)> {
        let j = self.tail(0, &self.problem.x0, u)? + smoothness(u, self.problem.u_prev, self.problem.cfg);
        Ok((j, self.matching_penalty(u[0])))
    }
}

impl<'a, P: Plant> BoxObjective for MpcObjective<'a, P> {
    fn dim(&self) -> usize {
        self.problem.cfg.control_horizon
    }

    fn value(&mut self, v: &[f64]) -> Result<f64> {
        self.fill(v);
        let (j, m) = self.sequence_value(&self.u)?;
        Ok(j + m)
    }

    /// Central differences that reuse the unperturbed prefix of the trajectory.
    fn gradient(&mut self, v: &[f64], _f: f64, h: f64, lo: &[f64], hi: &[f64], g: &mut [f64]) -> Result<()> {
        let p = self.problem;
        let cfg = p.cfg;
        let np = cfg.prediction_horizon;
        let dt = p.plant.step_min();
        self.fill(v);
        self.states.clear();
        self.states.push(p.x0.clone());
        let mut stage = vec![0.0; np + 1];
        for k in 0..np {
            let x = p.plant.advance(&self.states[k], p.t0 + k as f64 * dt, self.u[k], p.disturbances[k])?;
            stage[k + 1] = d_bg(p.plant.bg(&x, p.t0 + (k + 1) as f64 * dt), cfg);
            self.states.push(x);
        }
        self.suffix[np] = 0.0;
        for k in (0..np).rev() {
            self.suffix[k] = self.suffix[k + 1] + stage[k + 1];
        }
        self.scratch.copy_from_slice(&self.u);
        let nominal_extra = smoothness(&self.u, p.u_prev, cfg) + self.matching_penalty(self.u[0]);

        for i in 0..cfg.control_horizon {
            let eval = |this: &mut Self, vi: f64| -> Result<f64> {
                this.scratch[i] = vi * cfg.u_max;
                let x = this.states[i].clone();
                let t = this.tail(i, &x, &this.scratch)?
                    + smoothness(&this.scratch, p.u_prev, cfg)
                    + this.matching_penalty(this.scratch[0]);
                this.scratch[i] = this.u[i];
                Ok(t)
            };
            let nominal = self.suffix[i] + nominal_extra;
            let (up, down) = (v[i] + h <= hi[i], v[i] - h >= lo[i]);
            g[i] = match (up, down) {
                (true, true) => (eval(self, v[i] + h)? - eval(self, v[i] - h)?) / (2.0 * h),
                (true, false) => (eval(self, v[i] + h)? - nominal) / h,
                (false, true) => (nominal - eval(self, v[i] - h)?) / h,
                (false, false) => 0.0,
            };
        }
        Ok(())
    }

    fn penalty(&mut self, v: &[f64]) -> Result<f64> {
        self.fill(v);
        Ok(self.matching_penalty(self.u[0]))
    }
}

fn check_problem<P: Plant>(problem: &MpcProblem<'_, P>) -> Result<()> {
    problem.cfg.validate()?;
    if problem.disturbances.len() < problem.cfg.prediction_horizon {
        return Err(Error::Shape(format!(
            "need {} future disturbances, got {}",
            problem.cfg.prediction_horizon,
            problem.disturbances.len()
        )));
    }
    Ok(())
}

/// Normalised control moves of a full sequence shifted one step forward.
fn shifted_start(seq: &[f64], cfg: &MpcConfig) -> Vec<f64> {
    (0..cfg.control_horizon)
        .map(|k| {
            let u = seq.get(k + 1).copied().unwrap_or(cfg.basal);
            (u / cfg.u_max).clamp(0.0, 1.0)
        })
        .collect()
}

fn unshifted_start(seq: &[f64], cfg: &MpcConfig) -> Vec<f64> {
    (0..cfg.control_horizon)
        .map(|k| (seq.get(k).copied().unwrap_or(cfg.basal) / cfg.u_max).clamp(0.0, 1.0))
        .collect()
}

fn solve<P: Plant>(
    problem: &MpcProblem<'_, P>,
    matching: Option<Matching<'_>>,
    starts: Vec<Vec<f64>>,
    rng: &mut impl Rng,
    record_trace: bool,
) -> Result<MpcSolution> {
    let cfg = problem.cfg;
    let nc = cfg.control_horizon;
    let mut obj = MpcObjective::new(problem, matching);
    let lo = vec![0.0; nc];
    let hi = vec![1.0; nc];
    let best = minimize_multistart(&mut obj, &starts, &lo, &hi, &cfg.solver, rng, record_trace)?;
    obj.fill(&best.x);
    let sequence = obj.u.clone();
    let (cost, matching_value) = obj.sequence_value(&sequence)?;
    let m = match matching {
        Some(m) if m.rho > 0.0 => matching_value / m.rho,
        _ => 0.0,
    };
    Ok(MpcSolution {
        u: sequence[0],
        sequence,
        cost,
        matching: m,
        objective: best.value,
        status: best.status,
        iterations: best.iterations,
        evaluations: best.evaluations,
        trace: best.trace,
    })
}

/// Supervision policy π*: first move of the minimiser of `J` over
/// `u_{t..t+N_c−1} ∈ [0, u_max]`, later moves held at basal.
///
/// `warm` is the previous step's full sequence; it is shifted by one step
/// and used as the first start, followed by constant basal and
/// `cfg.solver.restarts` random starts.
pub fn solve_supervision<P: Plant>(
    problem: &MpcProblem<'_, P>,
    warm: Option<&[f64]>,
    rng: &mut impl Rng,
) -> Result<MpcSolution> {
    solve_supervision_traced(problem, warm, rng, false)
}

pub fn solve_supervision_traced<P: Plant>(
    problem: &MpcProblem<'_, P>,
    warm: Option<&[f64]>,
    rng: &mut impl Rng,
    record_trace: bool,
) -> Result<MpcSolution> {
    check_problem(problem)?;
    let cfg = problem.cfg;
    let basal = vec![(cfg.basal / cfg.u_max).clamp(0.0, 1.0); cfg.control_horizon];
    let mut starts = Vec::new();
    if let Some(w) = warm {
        starts.push(shifted_start(w, cfg));
    }
    starts.push(basal);
    solve(problem, None, starts, rng, record_trace)
}

/// Adaptive teacher π^T: minimiser of `J + ρ·W_p(δ_{u_t}, learner samples)`.
///
/// The learner samples are fixed for the whole solve. `warm` should be the
/// supervision policy's sequence at the same state; with ρ = 0 the solve
/// starts at that minimiser and returns it unchanged up to solver tolerance.
pub fn solve_matching_problem<P: Plant>(
    problem: &MpcProblem<'_, P>,
    matching: Matching<'_>,
    warm: Option<&[f64]>,
    rng: &mut impl Rng,
    record_trace: bool,
) -> Result<MpcSolution> {
    check_problem(problem)?;
    if matching.samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(matching.rho >= 0.0 && matching.rho.is_finite()) {
        return Err(Error::Config(format!("matching weight must be >= 0, got {}", matching.rho)));
    }
    let cfg = problem.cfg;
    let mut starts = Vec::new();
    if let Some(w) = warm {
        starts.push(unshifted_start(w, cfg));
        if matching.rho > 0.0 {
            // same plan, first move at the learner's median
            let mut s = unshifted_start(w, cfg);
            let mut sorted = matching.samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            s[0] = (sorted[sorted.len() / 2] / cfg.u_max).clamp(0.0, 1.0);
            starts.push(s);
        }
    } else {
        starts.push(vec![(cfg.basal / cfg.u_max).clamp(0.0, 1.0); cfg.control_horizon]);
    }
    if matching.rho == 0.0 && warm.is_some() {
        let local = SolverConfig { restarts: 0, ..cfg.solver.clone() };
        let cfg_local = MpcConfig { solver: local, ..cfg.clone() };
        let p = MpcProblem {
            plant: problem.plant,
            x0: problem.x0.clone(),
            t0: problem.t0,
            disturbances: problem.disturbances,
            u_prev: problem.u_prev,
            cfg: &cfg_local,
        };
        return solve(&p, Some(matching), starts, rng, record_trace);
    }
    solve(problem, Some(matching), starts, rng, record_trace)
}
