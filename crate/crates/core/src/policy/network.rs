//! Stacked LSTM policy with a small regression head and inverted dropout on
//! the input of every weight layer.
//!
//! Parameters live in one flat vector so the optimiser, the checkpoint
//! format and the finite-difference checks can all treat them uniformly.
//! Weight matrices are stored input-major: row `j` holds the weights from
//! input `j` to every output, which turns both the forward product and the
//! weight-gradient update into contiguous axpy loops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of raw input features: previous insulin, CGM, carbs at the horizon.
pub const INPUT_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layers: usize,
    pub hidden: usize,
    /// Width of the fully-connected ReLU layer in the head.
    pub head_hidden: usize,
}

impl Architecture {
    /// Three layers of 200 units.
    pub fn full() -> Self {
        Architecture { layers: 3, hidden: 200, head_hidden: 200 }
    }

    /// Two layers of 64 units, for runs that must finish on a laptop.
    pub fn desk() -> Self {
        Architecture { layers: 2, hidden: 64, head_hidden: 64 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.head_hidden == 0 {
            return Err(Error::Config(format!("architecture sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            INPUT_DIM
        } else {
            self.hidden
        }
    }

    pub fn num_params(&self) -> usize {
        Layout::new(self).total
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::full()
    }
}

/// Offsets of each block in the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    /// (weights, bias, input width) per recurrent layer; weights are
    /// `(n_in + H) × 4H`, gates ordered input, forget, cell, output.
    lstm: Vec<(usize, usize, usize)>,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

impl Layout {
    fn new(a: &Architecture) -> Self {
        let h4 = 4 * a.hidden;
        let mut off = 0;
        let mut lstm = Vec::with_capacity(a.layers);
        for l in 0..a.layers {
            let n_in = a.layer_input(l);
            let w = off;
            off += (n_in + a.hidden) * h4;
            let b = off;
            off += h4;
            lstm.push((w, b, n_in));
        }
        let w1 = off;
        off += a.hidden * a.head_hidden;
        let b1 = off;
        off += a.head_hidden;
        let w2 = off;
        off += a.head_hidden;
        let b2 = off;
        off += 1;
        Layout { lstm, w1, b1, w2, b2, total: off }
    }
}

/// Affine standardisation of inputs and labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: [f64; INPUT_DIM],
    pub input_std: [f64; INPUT_DIM],
    pub label_mean: f64,
    pub label_std: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            input_mean: [0.0; INPUT_DIM],
            input_std: [1.0; INPUT_DIM],
            label_mean: 0.0,
            label_std: 1.0,
        }
    }
}

/// Spreads below this are treated as constant features.
const MIN_STD: f64 = 1e-8;

impl Normalization {
    /// Per-feature mean and population standard deviation.
    pub fn fit(inputs: &[[f64; INPUT_DIM]], labels: &[f64]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::Shape(format!(
                "normalisation needs matching non-empty inputs and labels, got {} and {}",
                inputs.len(),
                labels.len()
            )));
        }
        let n = inputs.len() as f64;
        let mut mean = [0.0; INPUT_DIM];
        let mut std = [0.0; INPUT_DIM];
        for x in inputs {
            for j in 0..INPUT_DIM {
                mean[j] += x[j] / n;
            }
        }
        for x in inputs {
            for j in 0..INPUT_DIM {
                std[j] += (x[j] - mean[j]).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = if s.sqrt() > MIN_STD { s.sqrt() } else { 1.0 };
        }
        let lm = labels.iter().sum::<f64>() / n;
        let lv = labels.iter().map(|y| (y - lm).powi(2)).sum::<f64>() / n;
        Ok(Normalization {
            input_mean: mean,
            input_std: std,
            label_mean: lm,
            label_std: if lv.sqrt() > MIN_STD { lv.sqrt() } else { 1.0 },
        })
    }

    pub fn input(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        let mut z = [0.0; INPUT_DIM];
        for j in 0..INPUT_DIM {
            z[j] = (x[j] - self.input_mean[j]) / self.input_std[j];
        }
        z
    }

    pub fn label(&self, u: f64) -> f64 {
        (u - self.label_mean) / self.label_std
    }

    pub fn unlabel(&self, z: f64) -> f64 {
        z * self.label_std + self.label_mean
    }
}

/// What the learner sees at step t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyInput {
    /// Insulin applied at the previous step, mU/min.
    pub u_prev: f64,
    /// Current CGM reading, mg/dL.
    pub y: f64,
    /// Carbohydrate announced for step t + N_p, g.
    pub d_future: f64,
}

impl PolicyInput {
    pub fn features(&self) -> [f64; INPUT_DIM] {
        [self.u_prev, self.y, self.d_future]
    }

    fn check(&self) -> Result<()> {
        if self.u_prev.is_finite() && self.y.is_finite() && self.d_future.is_finite() {
            Ok(())
        } else {
            Err(Error::Shape(format!("non-finite policy input {self:?}")))
        }
    }
}

/// Per-layer hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(arch: &Architecture) -> Self {
        HiddenState {
            h: vec![vec![0.0; arch.hidden]; arch.layers],
            c: vec![vec![0.0; arch.hidden]; arch.layers],
        }
    }

    fn matches(&self, arch: &Architecture) -> bool {
        self.h.len() == arch.layers
            && self.c.len() == arch.layers
            && self.h.iter().chain(&self.c).all(|v| v.len() == arch.hidden)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// No dropout masks.
    Deterministic,
    /// Fresh Bernoulli masks on every weight layer's input.
    McDropout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub arch: Architecture,
    pub dropout: f64,
    /// Upper end of the admissible insulin range, mU/min.
    pub u_max: f64,
    pub norm: Normalization,
    pub params: Vec<f64>,
    layout_total: usize,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn draw_mask<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

/// Everything the backward pass needs from one time step of one stream.
#[derive(Debug, Clone)]
struct StepCache {
    /// Per layer: masked input followed by h_{t-1}.
    v: Vec<Vec<f64>>,
    /// Per layer: input mask (empty when no dropout).
    mask: Vec<Vec<f64>>,
    c_prev: Vec<Vec<f64>>,
    /// Per layer: activated gates i, f, g, o.
    gates: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
    a0: Vec<f64>,
    mask0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    mask1: Vec<f64>,
    out: f64,
}

impl PolicyNetwork {
    /// Xavier-uniform weights, zero biases except forget gates at one.
    pub fn new(arch: Architecture, dropout: f64, u_max: f64, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {dropout}")));
        }
        if !(u_max > 0.0) {
            return Err(Error::Config(format!("u_max must be positive, got {u_max}")));
        }
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let h = arch.hidden;
        for &(w, b, n_in) in &layout.lstm {
            let fan = (n_in + h + 4 * h) as f64;
            let r = (6.0 / fan).sqrt();
            for p in &mut params[w..w + (n_in + h) * 4 * h] {
                *p = rng.gen_range(-r..r);
            }
            for p in &mut params[b + h..b + 2 * h] {
                *p = 1.0;
            }
        }
        let r1 = (6.0 / (h + arch.head_hidden) as f64).sqrt();
        for p in &mut params[layout.w1..layout.w1 + h * arch.head_hidden] {
            *p = rng.gen_range(-r1..r1);
        }
        let r2 = (6.0 / (arch.head_hidden + 1) as f64).sqrt();
        for p in &mut params[layout.w2..layout.w2 + arch.head_hidden] {
            *p = rng.gen_range(-r2..r2);
        }
        Ok(PolicyNetwork {
            arch,
            dropout,
            u_max,
            norm: Normalization::default(),
            params,
            layout_total: layout.total,
        })
    }

    /// Rebuilds a network from stored parts, checking the parameter count.
    pub fn from_parts(arch: Architecture, dropout: f64, u_max: f64, norm: Normalization, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let total = arch.num_params();
        if params.len() != total {
            return Err(Error::Shape(format!("architecture needs {total} parameters, got {}", params.len())));
        }
        Ok(PolicyNetwork { arch, dropout, u_max, norm, params, layout_total: total })
    }

    pub fn num_params(&self) -> usize {
        self.layout_total
    }

    pub fn zero_state(&self) -> HiddenState {
        HiddenState::zeros(&self.arch)
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    /// One step on normalised features. Writes the next state into `next`
    /// and returns the normalised output; fills `cache` when given.
    fn step_normalized<R: Rng + ?Sized>(
        &self,
        layout: &Layout,
        s: &HiddenState,
        x: &[f64],
        mut rng: Option<&mut R>,
        next: &mut HiddenState,
        mut cache: Option<&mut StepCache>,
        recurrent: Option<&[Vec<f64>]>,
    ) -> f64 {
        let h = self.arch.hidden;
        let h4 = 4 * h;
        let p = &self.params;
        let masked = self.dropout > 0.0 && rng.is_some();
        let mut input: Vec<f64> = x.to_vec();
        let mut z = vec![0.0; h4];
        for (l, &(w, b, n_in)) in layout.lstm.iter().enumerate() {
            let mask = match rng.as_deref_mut() {
                Some(r) if masked => draw_mask(n_in, self.dropout, r),
                _ => Vec::new(),
            };
            let mut v = Vec::with_capacity(n_in + h);
            if mask.is_empty() {
                v.extend_from_slice(&input);
            } else {
                v.extend(input.iter().zip(&mask).map(|(a, m)| a * m));
            }
            v.extend_from_slice(&s.h[l]);
            // the recurrent half is never masked, so it can be shared
            let fresh = match recurrent {
                Some(r) => {
                    z.copy_from_slice(&r[l]);
                    n_in
                }
                None => {
                    z.copy_from_slice(&p[b..b + h4]);
                    v.len()
                }
            };
            for (j, &vj) in v[..fresh].iter().enumerate() {
                if vj != 0.0 {
                    axpy(vj, &p[w + j * h4..w + (j + 1) * h4], &mut z);
                }
            }
            let mut gates = vec![0.0; h4];
            let mut tanh_c = vec![0.0; h];
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                let c = f * s.c[l][k] + i * g;
                let tc = c.tanh();
                next.c[l][k] = c;
                next.h[l][k] = o * tc;
                gates[k] = i;
                gates[h + k] = f;
                gates[2 * h + k] = g;
                gates[3 * h + k] = o;
                tanh_c[k] = tc;
            }
            input.clear();
            input.extend_from_slice(&next.h[l]);
            if let Some(c) = cache.as_deref_mut() {
                c.v.push(v);
                c.mask.push(mask);
                c.c_prev.push(s.c[l].clone());
                c.gates.push(gates);
                c.tanh_c.push(tanh_c);
            }
        }

        let hh = self.arch.head_hidden;
        let mask0 = match rng.as_deref_mut() {
            Some(r) if masked => draw_mask(h, self.dropout, r),
            _ => Vec::new(),
        };
        let a0: Vec<f64> = if mask0.is_empty() { input } else { input.iter().zip(&mask0).map(|(a, m)| a * m).collect() };
        let mut z1 = p[layout.b1..layout.b1 + hh].to_vec();
        for (j, &aj) in a0.iter().enumerate() {
            if aj != 0.0 {
                axpy(aj, &p[layout.w1 + j * hh..layout.w1 + (j + 1) * hh], &mut z1);
            }
        }
        let mask1 = match rng.as_deref_mut() {
            Some(r) if masked => draw_mask(hh, self.dropout, r),
            _ => Vec::new(),
        };
        let a1: Vec<f64> = z1
            .iter()
            .enumerate()
            .map(|(k, z)| z.max(0.0) * if mask1.is_empty() { 1.0 } else { mask1[k] })
            .collect();
        let out = dot(&p[layout.w2..layout.w2 + hh], &a1) + p[layout.b2];
        if let Some(c) = cache {
            c.a0 = a0;
            c.mask0 = mask0;
            c.z1 = z1;
            c.a1 = a1;
            c.mask1 = mask1;
            c.out = out;
        }
        out
    }

    fn new_cache(&self) -> StepCache {
        let l = self.arch.layers;
        StepCache {
            v: Vec::with_capacity(l),
            mask: Vec::with_capacity(l),
            c_prev: Vec::with_capacity(l),
            gates: Vec::with_capacity(l),
            tanh_c: Vec::with_capacity(l),
            a0: Vec::new(),
            mask0: Vec::new(),
            z1: Vec::new(),
            a1: Vec::new(),
            mask1: Vec::new(),
            out: 0.0,
        }
    }

    fn denormalize(&self, z: f64) -> f64 {
        self.norm.unlabel(z).clamp(0.0, self.u_max)
    }

    /// `s_t = f_θ(s_{t−1}, u_{t−1}, y_t, d_{t+N_p})`, `u = g_θ(s_t)` clamped to
    /// `[0, u_max]`. Inverted dropout means the deterministic mode needs no
    /// weight rescaling.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        s: &HiddenState,
        input: &PolicyInput,
        mode: ForwardMode,
        rng: Option<&mut R>,
    ) -> Result<(HiddenState, f64)> {
        input.check()?;
        if !s.matches(&self.arch) {
            return Err(Error::Shape("hidden state does not match the architecture".into()));
        }
        let layout = self.layout();
        let x = self.norm.input(&input.features());
        let mut next = s.clone();
        let z = match mode {
            ForwardMode::Deterministic => self.step_normalized::<R>(&layout, s, &x, None, &mut next, None, None),
            ForwardMode::McDropout => {
                let r = rng.ok_or_else(|| Error::Config("MC-dropout forward needs a random source".into()))?;
                self.step_normalized(&layout, s, &x, Some(r), &mut next, None, None)
            }
        };
        Ok((next, self.denormalize(z)))
    }

    /// Deterministic forward without a random source.
    pub fn forward_deterministic(&self, s: &HiddenState, input: &PolicyInput) -> Result<(HiddenState, f64)> {
        self.forward::<rand_chacha::ChaCha8Rng>(s, input, ForwardMode::Deterministic, None)
    }

    /// `n` MC-dropout outputs from the same `s`, sorted ascending. The
    /// sampled hidden states are discarded.
    pub fn sample_predictive<R: Rng + ?Sized>(
        &self,
        s: &HiddenState,
        input: &PolicyInput,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        input.check()?;
        if n == 0 {
            return Err(Error::EmptySamples);
        }
        if !s.matches(&self.arch) {
            return Err(Error::Shape("hidden state does not match the architecture".into()));
        }
        let layout = self.layout();
        let x = self.norm.input(&input.features());
        let h4 = 4 * self.arch.hidden;
        let recurrent: Vec<Vec<f64>> = layout
            .lstm
            .iter()
            .enumerate()
            .map(|(l, &(w, b, n_in))| {
                let mut z = self.params[b..b + h4].to_vec();
                for (k, &hk) in s.h[l].iter().enumerate() {
                    if hk != 0.0 {
                        let j = n_in + k;
                        axpy(hk, &self.params[w + j * h4..w + (j + 1) * h4], &mut z);
                    }
                }
                z
            })
            .collect();
        let mut next = s.clone();
        let mut out: Vec<f64> = (0..n)
            .map(|_| {
                let z = self.step_normalized(&layout, s, &x, Some(&mut *rng), &mut next, None, Some(&recurrent));
                self.denormalize(z)
            })
            .collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// Mean squared error and its gradient for one truncated-BPTT chunk per
    /// stream, all on normalised data. `states` holds each stream's initial
    /// hidden state and is advanced to the state after its chunk; no
    /// gradient flows into it. The loss is the mean over every step of
    /// every stream; `grad` is overwritten.
    ///
    /// Masks come from `rng` in a fixed order, so two calls with equally
    /// seeded generators see identical masks.
    pub fn chunk_loss_and_gradient<R: Rng + ?Sized>(
        &self,
        states: &mut [HiddenState],
        inputs: &[&[[f64; INPUT_DIM]]],
        targets: &[&[f64]],
        mut rng: Option<&mut R>,
        grad: &mut [f64],
    ) -> Result<f64> {
        if states.len() != inputs.len() || inputs.len() != targets.len() {
            return Err(Error::Shape("one state, input and target sequence per stream".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer does not match the parameters".into()));
        }
        let count: usize = targets.iter().map(|t| t.len()).sum();
        if count == 0 {
            return Err(Error::Shape("empty chunk".into()));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let layout = self.layout();
        let mut loss = 0.0;
        for (stream, state) in states.iter_mut().enumerate() {
            let (xs, ys) = (inputs[stream], targets[stream]);
            if xs.len() != ys.len() || !state.matches(&self.arch) {
                return Err(Error::Shape(format!("stream {stream}: inputs, targets or state mismatched")));
            }
            let mut caches = Vec::with_capacity(xs.len());
            let mut s = state.clone();
            let mut next = state.clone();
            for x in xs.iter() {
                let mut cache = self.new_cache();
                self.step_normalized(&layout, &s, x, rng.as_deref_mut(), &mut next, Some(&mut cache), None);
                std::mem::swap(&mut s, &mut next);
                caches.push(cache);
            }
            let douts: Vec<f64> = caches
                .iter()
                .zip(ys.iter())
                .map(|(c, y)| {
                    let e = c.out - y;
                    loss += e * e;
                    2.0 * e / count as f64
                })
                .collect();
            self.backward(&layout, &caches, &douts, grad);
            *state = s;
        }
        Ok(loss / count as f64)
    }

    fn backward(&self, layout: &Layout, caches: &[StepCache], douts: &[f64], grad: &mut [f64]) {
        let h = self.arch.hidden;
        let h4 = 4 * h;
        let hh = self.arch.head_hidden;
        let nl = self.arch.layers;
        let p = &self.params;
        let mut dh_next = vec![vec![0.0; h]; nl];
        let mut dc_next = vec![vec![0.0; h]; nl];
        let mut dz = vec![0.0; h4];
        let mut dz1 = vec![0.0; hh];
        for (t, c) in caches.iter().enumerate().rev() {
            let dout = douts[t];
            // head
            grad[layout.b2] += dout;
            axpy(dout, &c.a1, &mut grad[layout.w2..layout.w2 + hh]);
            for k in 0..hh {
                let m = if c.mask1.is_empty() { 1.0 } else { c.mask1[k] };
                dz1[k] = if c.z1[k] > 0.0 { dout * p[layout.w2 + k] * m } else { 0.0 };
            }
            axpy(1.0, &dz1, &mut grad[layout.b1..layout.b1 + hh]);
            let mut dh_above = vec![0.0; h];
            for j in 0..h {
                if c.a0[j] != 0.0 {
                    axpy(c.a0[j], &dz1, &mut grad[layout.w1 + j * hh..layout.w1 + (j + 1) * hh]);
                }
                let m = if c.mask0.is_empty() { 1.0 } else { c.mask0[j] };
                if m != 0.0 {
                    dh_above[j] = m * dot(&p[layout.w1 + j * hh..layout.w1 + (j + 1) * hh], &dz1);
                }
            }

            for l in (0..nl).rev() {
                let (w, b, n_in) = layout.lstm[l];
                let g = &c.gates[l];
                for k in 0..h {
                    let dh = dh_above[k] + dh_next[l][k];
                    let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                    let tc = c.tanh_c[l][k];
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[l][k];
                    dz[k] = dc * gg * i * (1.0 - i);
                    dz[h + k] = dc * c.c_prev[l][k] * f * (1.0 - f);
                    dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                    dz[3 * h + k] = dh * tc * o * (1.0 - o);
                    dc_next[l][k] = dc * f;
                }
                axpy(1.0, &dz, &mut grad[b..b + h4]);
                let v = &c.v[l];
                let mut dbelow = vec![0.0; n_in];
                for (j, &vj) in v.iter().enumerate() {
                    let row = &p[w + j * h4..w + (j + 1) * h4];
                    if vj != 0.0 {
                        axpy(vj, &dz, &mut grad[w + j * h4..w + (j + 1) * h4]);
                    }
                    if j < n_in {
                        let m = if c.mask[l].is_empty() { 1.0 } else { c.mask[l][j] };
                        if m != 0.0 {
                            dbelow[j] = m * dot(row, &dz);
                        }
                    } else {
                        dh_next[l][j - n_in] = dot(row, &dz);
                    }
                }
                dh_above = dbelow;
            }
        }
    }

    /// Loss only, for finite-difference checks.
    pub fn chunk_loss<R: Rng + ?Sized>(
        &self,
        states: &[HiddenState],
        inputs: &[&[[f64; INPUT_DIM]]],
        targets: &[&[f64]],
        mut rng: Option<&mut R>,
    ) -> Result<f64> {
        let layout = self.layout();
        let count: usize = targets.iter().map(|t| t.len()).sum();
        let mut loss = 0.0;
        for (stream, state) in states.iter().enumerate() {
            let mut s = state.clone();
            let mut next = state.clone();
            for (x, y) in inputs[stream].iter().zip(targets[stream].iter()) {
                let out = self.step_normalized(&layout, &s, x, rng.as_deref_mut(), &mut next, None, None);
                std::mem::swap(&mut s, &mut next);
                loss += (out - y).powi(2);
            }
        }
        Ok(loss / count as f64)
    }
}
