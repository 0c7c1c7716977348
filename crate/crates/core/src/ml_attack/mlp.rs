use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_with_logit, degenerate_label, sigmoid, AttackDataset, ResponseModel};
use crate::error::{Error, Result};

/// How a challenge is presented to the network's input layer. Both encodings
/// are `N` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MlpInput {
    /// `Φ_0 .. Φ_{N-1}` (the constant feature is dropped).
    Parity,
    /// Challenge bits mapped to ±1.
    RawBits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub input: MlpInput,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![5, 10, 15],
            learning_rate: 0.01,
            momentum: 0.99,
            epochs: 2000,
            batch_size: 64,
            input: MlpInput::Parity,
            seed: 0,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "need learning_rate > 0 and momentum in [0, 1), got {} and {}",
                self.learning_rate, self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Dense { inputs, outputs, weights, bias }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64], z: &mut [f64]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *zo = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Fully connected network: ReLU hidden layers, one sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input: MlpInput,
    layers: Vec<Dense>,
}

/// Per-layer pre-activations and activations of one forward pass.
struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    input: Vec<f64>,
    offsets: Vec<usize>,
}

impl Mlp {
    pub fn new(input_width: usize, cfg: &MlpConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut dims = vec![input_width];
        dims.extend(&cfg.hidden);
        dims.push(1);
        let layers = dims.windows(2).map(|d| Dense::init(d[0], d[1], &mut rng)).collect();
        Ok(Mlp { input: cfg.input, layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_width()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    fn encode(&self, phi: &[f64], out: &mut Vec<f64>) {
        let n = self.input_width();
        out.clear();
        match self.input {
            MlpInput::Parity => out.extend_from_slice(&phi[..n]),
            MlpInput::RawBits => out.extend((0..n).map(|m| phi[m] * phi[m + 1])),
        }
    }

    fn trace(&self) -> Trace {
        Trace {
            pre: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            post: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            delta: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            input: Vec::with_capacity(self.input_width()),
            offsets: self
                .layers
                .iter()
                .scan(0, |acc, l| {
                    let off = *acc;
                    *acc += l.n_params();
                    Some(off)
                })
                .collect(),
        }
    }

    /// Forward pass; returns the output logit.
    fn forward(&self, phi: &[f64], t: &mut Trace) -> f64 {
        let mut input = std::mem::take(&mut t.input);
        self.encode(phi, &mut input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let x: &[f64] = if l == 0 { &input } else { &t.post[l - 1] };
            layer.forward(x, &mut t.pre[l]);
            let (pre, post) = (&t.pre[l], &mut t.post[l]);
            for (p, &z) in post.iter_mut().zip(pre) {
                *p = if l == last { z } else { z.max(0.0) };
            }
        }
        t.input = input;
        t.pre[last][0]
    }

    /// Adds `scale ×` the gradient of one sample's cross-entropy into `grad`.
    fn backward(&self, t: &mut Trace, label: bool, scale: f64, grad: &mut [f64]) {
        let last = self.layers.len() - 1;
        t.delta[last][0] = (sigmoid(t.pre[last][0]) - label as u8 as f64) * scale;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let x: &[f64] = if l == 0 { &t.input } else { &t.post[l - 1] };
            let off = t.offsets[l];
            let (gw, gb) = grad[off..off + layer.n_params()].split_at_mut(layer.weights.len());
            for o in 0..layer.outputs {
                let d = t.delta[l][o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, v) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
            if l > 0 {
                let (before, after) = t.delta.split_at_mut(l);
                let prev = &mut before[l - 1];
                let cur = &after[0];
                for (i, p) in prev.iter_mut().enumerate() {
                    if t.pre[l - 1][i] <= 0.0 {
                        *p = 0.0;
                        continue;
                    }
                    *p = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * cur[o]).sum();
                }
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::LengthMismatch { expected: self.n_params(), actual: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn logit(&self, phi: &[f64]) -> f64 {
        self.forward(phi, &mut self.trace())
    }

    /// Mean cross-entropy over the rows `indices` of `ds`.
    pub fn loss(&self, ds: &AttackDataset, indices: &[usize]) -> f64 {
        let mut t = self.trace();
        indices.iter().map(|&i| bce_with_logit(self.forward(ds.row(i), &mut t), ds.label(i))).sum::<f64>()
            / indices.len() as f64
    }

    /// Gradient of [`Mlp::loss`] by backpropagation, in [`Mlp::params`] order.
    pub fn gradient(&self, ds: &AttackDataset, indices: &[usize]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        let mut t = self.trace();
        self.accumulate(ds, indices, &mut t, &mut grad);
        grad
    }

    fn accumulate(&self, ds: &AttackDataset, indices: &[usize], t: &mut Trace, grad: &mut [f64]) {
        let scale = 1.0 / indices.len() as f64;
        for &i in indices {
            self.forward(ds.row(i), t);
            self.backward(t, ds.label(i), scale, grad);
        }
    }

    fn constant(input_width: usize, cfg: &MlpConfig, label: bool) -> Result<Self> {
        let mut m = Mlp::new(input_width, cfg)?;
        for l in &mut m.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        m.layers.last_mut().expect("output layer").bias[0] = if label { 1.0 } else { -1.0 };
        Ok(m)
    }
}

impl ResponseModel for Mlp {
    fn predict(&self, phi: &[f64]) -> bool {
        self.logit(phi) > 0.0
    }
}

/// Mini-batch SGD with classical momentum (`v ← μv + g`, `θ ← θ − ηv`),
/// reshuffling every epoch.
pub fn train_mlp(ds: &AttackDataset, cfg: &MlpConfig) -> Result<Mlp> {
    cfg.validate()?;
    let input_width = ds.width().saturating_sub(1);
    if let Some(label) = degenerate_label(ds)? {
        return Mlp::constant(input_width, cfg, label);
    }
    let mut model = Mlp::new(input_width, cfg)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut t = model.trace();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            model.accumulate(ds, batch, &mut t, &mut grad);
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
            model.set_params(&params)?;
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        log::warn!("MLP training diverged; parameters are not finite");
    }
    Ok(model)
}
