//! Independent reference implementations shared by the integration tests
//! and the acceptance run. None of these call into the code they check.

#![allow(dead_code)]

use apil::control::{MpcConfig, MpcProblem, ScalarPlant};

/// Discrete optimal transport between two integer-weighted point sets,
/// solved as a min-cost flow by successive shortest paths (Bellman–Ford).
/// Returns `W_p = (min cost / total mass)^(1/p)` with ground cost `|x − y|^p`.
pub fn ot_oracle(a: &[(f64, u64)], b: &[(f64, u64)], p: f64) -> f64 {
    let total: u64 = a.iter().map(|x| x.1).sum();
    assert_eq!(total, b.iter().map(|x| x.1).sum::<u64>(), "masses must balance");
    // nodes: source, a..., b..., sink
    let n = a.len() + b.len() + 2;
    let (src, sink) = (0, n - 1);
    struct Edge {
        to: usize,
        cap: i64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: i64, cost: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0, cost: -cost });
    };
    for (i, &(_, m)) in a.iter().enumerate() {
        add(&mut edges, &mut adj, src, 1 + i, m as i64, 0.0);
    }
    for (j, &(_, m)) in b.iter().enumerate() {
        add(&mut edges, &mut adj, 1 + a.len() + j, sink, m as i64, 0.0);
    }
    for (i, &(x, _)) in a.iter().enumerate() {
        for (j, &(y, _)) in b.iter().enumerate() {
            add(&mut edges, &mut adj, 1 + i, 1 + a.len() + j, i64::MAX / 4, (x - y).abs().powf(p));
        }
    }
    let mut cost = 0.0;
    let mut flow = 0i64;
    while flow < total as i64 {
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<usize>> = vec![None; n];
        dist[src] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > 0 && dist[u] + ed.cost < dist[ed.to] - 1e-15 {
                        dist[ed.to] = dist[u] + ed.cost;
                        prev[ed.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        assert!(dist[sink].is_finite(), "no augmenting path");
        let mut push = i64::MAX;
        let mut v = sink;
        while let Some(e) = prev[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = prev[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push;
        cost += push as f64 * dist[sink];
    }
    (cost / total as f64).powf(1.0 / p)
}

/// Exhaustive search over a uniform grid of the free inputs of a short
/// horizon problem (`N_c ≤ 2`). Returns `(best sequence, best cost, spacing)`.
pub fn mpc_grid_search(problem: &MpcProblem<'_, ScalarPlant>, points: usize) -> (Vec<f64>, f64, f64) {
    let cfg = problem.cfg;
    let np = cfg.prediction_horizon;
    let nc = cfg.control_horizon;
    assert!(nc <= 2 && np <= 2);
    let per_axis = if nc == 1 { points } else { (points as f64).sqrt().round() as usize };
    let h = cfg.u_max / (per_axis - 1) as f64;
    let mut best = (Vec::new(), f64::INFINITY);
    let mut u = vec![cfg.basal; np];
    let outer = if nc == 2 { per_axis } else { 1 };
    for i in 0..per_axis {
        for j in 0..outer {
            u[0] = i as f64 * h;
            if nc == 2 {
                u[1] = j as f64 * h;
            }
            let c = scalar_cost(problem.plant, problem.x0, problem.disturbances, &u, problem.u_prev, cfg);
            if c < best.1 {
                best = (u.clone(), c);
            }
        }
    }
    (best.0, best.1, h)
}

/// Independent cost for the scalar plant, written out from the definition.
pub fn scalar_cost(plant: &ScalarPlant, g0: f64, d: &[f64], u: &[f64], u_prev: f64, cfg: &MpcConfig) -> f64 {
    let mut g = g0;
    let mut j = 0.0;
    for k in 0..u.len() {
        g = g + plant.step_min * (plant.relax * (plant.g_basal - g) - plant.sensitivity * (u[k] - plant.u_basal))
            + plant.carb_gain * d[k];
        // mg/dL -> mmol/L
        let e = (g - cfg.target_bg) / 18.016;
        j += if e < 0.0 { cfg.w_hypo * e * e } else { cfg.w_hyper * e * e };
        if k < cfg.control_horizon {
            let prev = if k == 0 { u_prev } else { u[k - 1] };
            j += cfg.beta * (u[k] - prev).powi(2);
        }
    }
    j
}

/// `P(#positive ≥ k)` under the null by enumerating every sign pattern.
pub fn sign_tail_by_enumeration(m: usize, k: usize) -> f64 {
    assert!(m <= 24);
    let hits = (0u32..(1 << m)).filter(|s| s.count_ones() as usize >= k).count();
    hits as f64 / (1u64 << m) as f64
}

/// KS statistic by evaluating both empirical CDFs at every data point.
pub fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
    a.iter().chain(b).map(|&t| (cdf(a, t) - cdf(b, t)).abs()).fold(0.0, f64::max)
}

use apil::control::{MheConfig, MovingHorizonEstimator, Plant};
use apil::patient::{cgm_observe, PatientModel, SensorConfig};
use rand::SeedableRng;

/// Runs `truth` open loop for `steps` control steps (two meals, a bolus
/// with each) while an estimator built on `model` tracks it from CGM.
/// Returns the absolute BG estimation error at every step.
pub fn mhe_tracking_errors(truth: &PatientModel, model: &PatientModel, steps: usize, noise_std: f64) -> Vec<f64> {
    let (ub, x0) = truth.basal_equilibrium(110.0).expect("equilibrium");
    let (_, guess) = model.basal_equilibrium(110.0).expect("equilibrium");
    let sensor = SensorConfig { noise_std, ..SensorConfig::default() };
    let mut noise = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut est = MovingHorizonEstimator::new(model.clone(), MheConfig::default(), guess, 0.0).expect("estimator");
    let dt = truth.step_min();
    let mut x = x0;
    let mut errors = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let y = cgm_observe(&x, &truth.constants_at(t), &sensor, &mut noise);
        let xh = est.observe(y).expect("mhe solve");
        errors.push((model.bg(&xh, t) - truth.bg(&x, t)).abs());
        let carbs = match k {
            12 => 50.0,
            48 => 30.0,
            _ => 0.0,
        };
        let u = if carbs > 0.0 { ub + 20.0 * carbs / dt } else { ub };
        est.apply(u, carbs);
        x = truth.advance(&x, t, u, carbs).expect("plant step");
    }
    errors
}
