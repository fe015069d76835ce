//! Truncated backpropagation through time with Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{HiddenState, PolicyNetwork, INPUT_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Truncation length of backpropagation through time, steps.
    pub chunk_len: usize,
    /// Episodes processed side by side per update.
    pub batch: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; zero disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, chunk_len: 64, batch: 16, learning_rate: 1e-3, clip_norm: 5.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_len == 0 || self.batch == 0 {
            return Err(Error::Config("chunk_len and batch must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Adam moments, kept across calls so training can resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// One episode in raw units, ordered by step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Episode {
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub labels: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Trains `net` on `episodes` using the network's current normalisation.
/// Each batch of episodes starts from zero hidden states; state is carried
/// (without gradient) from one chunk to the next. Returns the mean loss of
/// each epoch.
pub fn train(
    net: &mut PolicyNetwork,
    adam: &mut Adam,
    episodes: &[Episode],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if episodes.iter().all(|e| e.is_empty()) {
        return Err(Error::Shape("training set is empty".into()));
    }
    if adam.m.len() != net.num_params() {
        return Err(Error::Shape("optimiser state does not match the network".into()));
    }
    let norm = net.norm;
    let data: Vec<(Vec<[f64; INPUT_DIM]>, Vec<f64>)> = episodes
        .iter()
        .filter(|e| !e.is_empty())
        .map(|e| {
            if e.inputs.len() != e.labels.len() {
                return Err(Error::Shape("episode inputs and labels differ in length".into()));
            }
            Ok((e.inputs.iter().map(|x| norm.input(x)).collect(), e.labels.iter().map(|&u| norm.label(u)).collect()))
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; net.num_params()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for (bi, batch) in order.chunks(cfg.batch).enumerate() {
            let mut states: Vec<HiddenState> = batch.iter().map(|_| net.zero_state()).collect();
            let longest = batch.iter().map(|&e| data[e].1.len()).max().unwrap_or(0);
            let mut start = 0;
            while start < longest {
                let live: Vec<usize> = (0..batch.len()).filter(|&k| data[batch[k]].1.len() > start).collect();
                let xs: Vec<&[[f64; INPUT_DIM]]> = live
                    .iter()
                    .map(|&k| {
                        let x = &data[batch[k]].0;
                        &x[start..(start + cfg.chunk_len).min(x.len())]
                    })
                    .collect();
                let ys: Vec<&[f64]> = live
                    .iter()
                    .map(|&k| {
                        let y = &data[batch[k]].1;
                        &y[start..(start + cfg.chunk_len).min(y.len())]
                    })
                    .collect();
                let mut live_states: Vec<HiddenState> = live.iter().map(|&k| states[k].clone()).collect();
                let n: usize = ys.iter().map(|y| y.len()).sum();
                let loss = net.chunk_loss_and_gradient(&mut live_states, &xs, &ys, Some(&mut *rng), &mut grad)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: bi,
                        detail: format!("loss {loss} at chunk starting at step {start}"),
                    });
                }
                for (k, s) in live.iter().zip(live_states) {
                    states[*k] = s;
                }
                if cfg.clip_norm > 0.0 {
                    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if norm > cfg.clip_norm {
                        let s = cfg.clip_norm / norm;
                        grad.iter_mut().for_each(|g| *g *= s);
                    }
                }
                adam.step(&mut net.params, &grad, cfg.learning_rate);
                total += loss * n as f64;
                count += n;
                start += cfg.chunk_len;
            }
        }
        history.push(total / count as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::network::{Architecture, Normalization};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episodes(f: impl Fn(usize, f64) -> f64, rng: &mut ChaCha8Rng) -> Vec<Episode> {
        (0..3)
            .map(|_| {
                let inputs: Vec<[f64; 3]> =
                    (0..100).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(80.0..200.0), 0.0]).collect();
                let labels = inputs.iter().enumerate().map(|(k, x)| f(k, x[1])).collect();
                Episode { inputs, labels }
            })
            .collect()
    }

    #[test]
    fn fits_a_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eps = episodes(|_, _| 7.0, &mut rng);
        let arch = Architecture { layers: 1, hidden: 8, head_hidden: 8 };
        let mut net = PolicyNetwork::new(arch, 0.0, 100.0, &mut rng).unwrap();
        let all_x: Vec<[f64; 3]> = eps.iter().flat_map(|e| e.inputs.clone()).collect();
        let all_y: Vec<f64> = eps.iter().flat_map(|e| e.labels.clone()).collect();
        net.norm = Normalization::fit(&all_x, &all_y).unwrap();
        let mut adam = Adam::new(net.num_params());
        let cfg = TrainConfig { epochs: 50, learning_rate: 1e-2, ..Default::default() };
        let h = train(&mut net, &mut adam, &eps, &cfg, &mut rng).unwrap();
        assert!(*h.last().unwrap() < 1e-3, "{h:?}");
    }

    #[test]
    fn loss_decreases_on_a_glucose_dependent_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = episodes(|_, y| (y - 100.0).max(0.0) * 0.2, &mut rng);
        let arch = Architecture { layers: 2, hidden: 8, head_hidden: 8 };
        let mut net = PolicyNetwork::new(arch, 0.1, 100.0, &mut rng).unwrap();
        let all_x: Vec<[f64; 3]> = eps.iter().flat_map(|e| e.inputs.clone()).collect();
        let all_y: Vec<f64> = eps.iter().flat_map(|e| e.labels.clone()).collect();
        net.norm = Normalization::fit(&all_x, &all_y).unwrap();
        let mut adam = Adam::new(net.num_params());
        let cfg = TrainConfig { epochs: 40, learning_rate: 1e-2, chunk_len: 16, ..Default::default() };
        let h = train(&mut net, &mut adam, &eps, &cfg, &mut rng).unwrap();
        assert!(h.iter().all(|l| l.is_finite()));
        assert!(h.last().unwrap() < &(0.5 * h[0]), "{h:?}");
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = PolicyNetwork::new(Architecture::desk(), 0.2, 100.0, &mut rng).unwrap();
        let mut adam = Adam::new(net.num_params());
        assert!(train(&mut net, &mut adam, &[Episode::default()], &TrainConfig::default(), &mut rng).is_err());
    }
}
