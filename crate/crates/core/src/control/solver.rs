//! Box-constrained local optimiser: spectral projected gradient with a
//! non-monotone backtracking line search, central finite-difference
//! gradients, and multi-start.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop when `‖P(x − ∇f / max(1, |f|)) − x‖∞ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Stop after three consecutive iterations with relative decrease below this.
    pub stall_tol: f64,
    /// Finite-difference step in the solver's (normalised) coordinates.
    pub fd_step: f64,
    /// Random restarts on top of the deterministic starts.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 200,
            grad_tol: 1e-4,
            stall_tol: 1e-9,
            fd_step: 1e-5,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Projected-gradient test met.
    Converged,
    /// No measurable progress; treated as a local minimum.
    Stalled,
    /// Iteration cap reached; the best iterate is returned.
    MaxIterations,
}

/// One solver iteration, for the optional CSV log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    /// Matching-penalty share of `value`, zero for plain problems.
    pub penalty: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<IterationRecord>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.status != SolveStatus::MaxIterations
    }
}

/// Objective on a box, in whatever coordinates the implementor chooses.
pub trait BoxObjective {
    fn dim(&self) -> usize;

    fn value(&mut self, x: &[f64]) -> Result<f64>;

    /// Central differences with step `h`; one-sided where the stencil would
    /// leave the box.
    fn gradient(&mut self, x: &[f64], f: f64, h: f64, lo: &[f64], hi: &[f64], g: &mut [f64]) -> Result<()> {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let (up, down) = (x[i] + h <= hi[i], x[i] - h >= lo[i]);
            g[i] = match (up, down) {
                (true, true) => {
                    probe[i] = x[i] + h;
                    let fp = self.value(&probe)?;
                    probe[i] = x[i] - h;
                    let fm = self.value(&probe)?;
                    (fp - fm) / (2.0 * h)
                }
                (true, false) => {
                    probe[i] = x[i] + h;
                    (self.value(&probe)? - f) / h
                }
                (false, true) => {
                    probe[i] = x[i] - h;
                    (f - self.value(&probe)?) / h
                }
                (false, false) => 0.0,
            };
            probe[i] = x[i];
        }
        Ok(())
    }

    /// Share of `value(x)` contributed by a penalty term, for logging.
    fn penalty(&mut self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

#[inline]
fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Projected-gradient step length with the gradient scaled by `1/max(1, |f|)`.
fn projected_gradient_norm(x: &[f64], g: &[f64], f: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let s = 1.0 / f.abs().max(1.0);
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (xi, gi))| ((xi - s * gi).clamp(lo[i], hi[i]) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const LAMBDA_MIN: f64 = 1e-10;
const LAMBDA_MAX: f64 = 1e10;
const NONMONOTONE_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

/// Minimises `obj` over the box `[lo, hi]` from `x0`.
pub fn minimize_box<O: BoxObjective + ?Sized>(
    obj: &mut O,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
    record_trace: bool,
) -> Result<Minimum> {
    let n = obj.dim();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut evals = 1;
    let mut f = obj.value(&x)?;
    let mut g = vec![0.0; n];
    obj.gradient(&x, f, cfg.fd_step, lo, hi, &mut g)?;
    evals += 2 * n;

    let mut best_x = x.clone();
    let mut best_f = f;
    let mut history = vec![f];
    let mut trace = Vec::new();

    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut lambda = if gmax > 0.0 { (1.0 / gmax).clamp(LAMBDA_MIN, LAMBDA_MAX) } else { 1.0 };
    let mut status = SolveStatus::MaxIterations;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut d = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];

    for it in 0..cfg.max_iter {
        iterations = it;
        let pg = projected_gradient_norm(&x, &g, f, lo, hi);
        if record_trace {
            trace.push(IterationRecord {
                iteration: it,
                value: f,
                penalty: obj.penalty(&x)?,
                grad_norm: pg,
            });
        }
        if pg <= cfg.grad_tol {
            status = SolveStatus::Converged;
            break;
        }

        for i in 0..n {
            d[i] = (x[i] - lambda * g[i]).clamp(lo[i], hi[i]) - x[i];
        }
        let gtd = dot(&g, &d);
        if gtd >= 0.0 {
            status = SolveStatus::Stalled;
            break;
        }
        let f_ref = history.iter().rev().take(NONMONOTONE_MEMORY).fold(f64::MIN, |a, b| a.max(*b));
        let mut alpha = 1.0;
        let fnew = loop {
            for i in 0..n {
                xn[i] = x[i] + alpha * d[i];
            }
            project(&mut xn, lo, hi);
            let fv = obj.value(&xn)?;
            evals += 1;
            if fv.is_finite() && fv <= f_ref + ARMIJO * alpha * gtd {
                break Some(fv);
            }
            let quad = if fv.is_finite() {
                -0.5 * alpha * alpha * gtd / (fv - f - alpha * gtd)
            } else {
                f64::NAN
            };
            alpha = if quad.is_finite() && quad >= 0.1 * alpha && quad <= 0.9 * alpha {
                quad
            } else {
                0.5 * alpha
            };
            if alpha < 1e-12 {
                break None;
            }
        };
        let Some(fnew) = fnew else {
            status = SolveStatus::Stalled;
            break;
        };

        obj.gradient(&xn, fnew, cfg.fd_step, lo, hi, &mut gn)?;
        evals += 2 * n;
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = xn[i] - x[i];
            let y = gn[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        lambda = if sy > 0.0 { (ss / sy).clamp(LAMBDA_MIN, LAMBDA_MAX) } else { LAMBDA_MAX.min(1e4 * lambda.max(1.0)) };

        let decrease = (f - fnew).abs();
        stalls = if decrease <= cfg.stall_tol * fnew.abs().max(1.0) { stalls + 1 } else { 0 };

        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        f = fnew;
        history.push(f);
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&x);
        }
        iterations = it + 1;
        if stalls >= 3 {
            status = SolveStatus::Stalled;
            break;
        }
    }

    Ok(Minimum {
        x: best_x,
        value: best_f,
        status,
        iterations,
        evaluations: evals,
        trace,
    })
}

/// Runs [`minimize_box`] from each deterministic start plus
/// `cfg.restarts` uniform random points and keeps the lowest value.
/// Ties keep the earlier start.
pub fn minimize_multistart<O: BoxObjective + ?Sized>(
    obj: &mut O,
    starts: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
    rng: &mut impl Rng,
    record_trace: bool,
) -> Result<Minimum> {
    let n = obj.dim();
    let mut all: Vec<Vec<f64>> = starts.to_vec();
    for _ in 0..cfg.restarts {
        all.push(
            (0..n)
                .map(|i| {
                    let (a, b) = (lo[i], if hi[i].is_finite() { hi[i] } else { lo[i] + 1.0 });
                    if b > a { rng.gen_range(a..b) } else { a }
                })
                .collect(),
        );
    }
    let mut best: Option<Minimum> = None;
    for (k, s) in all.iter().enumerate() {
        let m = minimize_box(obj, s, lo, hi, cfg, record_trace && k == 0)?;
        best = match best {
            Some(b) if b.value <= m.value => {
                let mut b = b;
                b.evaluations += m.evaluations;
                Some(b)
            }
            Some(b) => {
                let mut m = m;
                m.evaluations += b.evaluations;
                if m.trace.is_empty() {
                    m.trace = b.trace;
                }
                Some(m)
            }
            None => Some(m),
        };
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Quadratic {
        center: Vec<f64>,
        weights: Vec<f64>,
    }

    impl BoxObjective for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn value(&mut self, x: &[f64]) -> Result<f64> {
            Ok(x.iter()
                .zip(&self.center)
                .zip(&self.weights)
                .map(|((x, c), w)| w * (x - c).powi(2))
                .sum())
        }
    }

    #[test]
    fn solves_ill_conditioned_quadratic_with_active_bounds() {
        let mut q = Quadratic {
            center: vec![0.3, 1.7, -0.4, 0.5],
            weights: vec![1.0, 100.0, 10.0, 1000.0],
        };
        let lo = vec![0.0; 4];
        let hi = vec![1.0; 4];
        let cfg = SolverConfig { grad_tol: 1e-8, ..Default::default() };
        let m = minimize_box(&mut q, &[0.9, 0.1, 0.9, 0.1], &lo, &hi, &cfg, false).unwrap();
        let expect = [0.3, 1.0, 0.0, 0.5];
        for (a, b) in m.x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-5, "{:?}", m.x);
        }
        assert!(m.converged());
    }

    #[test]
    fn multistart_escapes_a_local_minimum() {
        struct DoubleWell;
        impl BoxObjective for DoubleWell {
            fn dim(&self) -> usize {
                1
            }
            fn value(&mut self, x: &[f64]) -> Result<f64> {
                let z = x[0];
                // local minimum near 0.2, global near 0.85
                Ok(-(-((z - 0.2) / 0.08).powi(2)).exp() - 2.0 * (-((z - 0.85) / 0.08).powi(2)).exp())
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SolverConfig { restarts: 8, ..Default::default() };
        let m = minimize_multistart(&mut DoubleWell, &[vec![0.15]], &[0.0], &[1.0], &cfg, &mut rng, false).unwrap();
        assert!((m.x[0] - 0.85).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn trace_is_recorded_on_request() {
        let mut q = Quadratic { center: vec![0.5, 0.5], weights: vec![1.0, 3.0] };
        let m = minimize_box(&mut q, &[0.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], &SolverConfig::default(), true).unwrap();
        assert!(!m.trace.is_empty());
        assert!(m.trace.windows(2).all(|w| w[1].iteration == w[0].iteration + 1));
    }
}
