//! Small dense feedforward networks with manual backpropagation.
//!
//! Weights are row-major `(out, in)` matrices. Hidden layers are ReLU only;
//! the output layer is sigmoid, softmax, or identity. Everything is seeded
//! and deterministic: the same seed and data produce bit-identical
//! parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to predicted probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Binary cross-entropy, paired with sigmoid outputs.
    Bce,
    /// Categorical cross-entropy, paired with a softmax output.
    Ce,
}

/// One dense layer: `out = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(rows: usize, cols: usize, activation: Activation) -> Self {
        DenseLayer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
            activation,
        }
    }

    /// Uniform init in `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`,
    /// zero biases.
    pub fn glorot(rows: usize, cols: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        DenseLayer {
            rows,
            cols,
            weights,
            biases: vec![0.0; rows],
            activation,
        }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.biases[r];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
    }
}

/// ReLU on/off configuration of all hidden units, identifying the polyhedral
/// region the input falls into. Pre-activation exactly zero counts as off.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Vec<f64>,
    pub logit: Vec<f64>,
    pub pattern: ActivationPattern,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    /// Early stop once the epoch mean loss drops to this level.
    pub target_loss: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0,1)".into()));
        }
        if self.target_loss < 0.0 {
            return Err(Error::Config("target_loss must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 2000,
            batch_size: 32,
            momentum: 0.9,
            seed: 0,
            target_loss: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    pub input_dim: usize,
    pub layers: Vec<DenseLayer>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax_into(logit: &[f64], out: &mut [f64]) {
    let max = logit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logit) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl FeedforwardNet {
    /// Builds a net with the given ReLU hidden sizes and output head,
    /// Glorot-initialized from `seed`.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        output_activation: Activation,
        seed: u64,
    ) -> Self {
        assert!(input_dim > 0 && output_dim > 0);
        assert!(!matches!(output_activation, Activation::Relu));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(DenseLayer::glorot(h, prev, Activation::Relu, &mut rng));
            prev = h;
        }
        layers.push(DenseLayer::glorot(
            output_dim,
            prev,
            output_activation,
            &mut rng,
        ));
        FeedforwardNet { input_dim, layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.rows).unwrap_or(0)
    }

    pub fn hidden_unit_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.activation == Activation::Relu)
            .map(|l| l.rows)
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite input".into()));
        }
        Ok(())
    }

    /// Forward pass returning the activated output, the final-layer logits,
    /// and the hidden-unit sign pattern.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut bits = Vec::with_capacity(self.hidden_unit_count());
        let mut cur = x.to_vec();
        let mut logit = Vec::new();
        let mut output = Vec::new();
        for layer in &self.layers {
            let mut pre = vec![0.0; layer.rows];
            layer.affine(&cur, &mut pre);
            match layer.activation {
                Activation::Relu => {
                    for v in pre.iter_mut() {
                        bits.push(*v > 0.0);
                        if *v <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    cur = pre;
                }
                Activation::Sigmoid => {
                    logit = pre.clone();
                    output = pre.iter().map(|&z| sigmoid(z)).collect();
                }
                Activation::Softmax => {
                    logit = pre.clone();
                    output = vec![0.0; pre.len()];
                    softmax_into(&pre, &mut output);
                }
                Activation::Identity => {
                    logit = pre.clone();
                    output = pre;
                }
            }
        }
        Ok(ForwardPass {
            output,
            logit,
            pattern: ActivationPattern { bits },
        })
    }

    /// Effective affine map `logit(class) = W.x + b` inside the region
    /// identified by `pattern`.
    pub fn region_weights(&self, pattern: &ActivationPattern, class: usize) -> Result<(Vec<f64>, f64)> {
        if pattern.bits.len() != self.hidden_unit_count() {
            return Err(Error::DimensionMismatch {
                expected: self.hidden_unit_count(),
                got: pattern.bits.len(),
            });
        }
        let out = self.layers.last().expect("net has layers");
        if class >= out.rows {
            return Err(Error::DimensionMismatch {
                expected: out.rows,
                got: class,
            });
        }
        // Running affine map x -> A x + c, masked per ReLU layer.
        let mut a: Vec<Vec<f64>> = (0..self.input_dim)
            .map(|i| {
                let mut e = vec![0.0; self.input_dim];
                e[i] = 1.0;
                e
            })
            .collect();
        // a is stored column-major as rows of the current map: a[r] is row r.
        let mut rows = self.input_dim;
        let mut amat: Vec<f64> = {
            let mut m = vec![0.0; self.input_dim * self.input_dim];
            for (i, row) in a.drain(..).enumerate() {
                m[i * self.input_dim..(i + 1) * self.input_dim].copy_from_slice(&row);
            }
            m
        };
        let mut c = vec![0.0; self.input_dim];
        let mut bit_off = 0;
        for layer in &self.layers[..self.layers.len() - 1] {
            debug_assert_eq!(layer.activation, Activation::Relu);
            let mut next_a = vec![0.0; layer.rows * self.input_dim];
            let mut next_c = vec![0.0; layer.rows];
            for r in 0..layer.rows {
                if !pattern.bits[bit_off + r] {
                    continue; // inactive unit: zero row
                }
                let wrow = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for j in 0..self.input_dim {
                    let mut acc = 0.0;
                    for k in 0..rows {
                        acc += wrow[k] * amat[k * self.input_dim + j];
                    }
                    next_a[r * self.input_dim + j] = acc;
                }
                let mut acc = layer.biases[r];
                for k in 0..rows {
                    acc += wrow[k] * c[k];
                }
                next_c[r] = acc;
            }
            amat = next_a;
            c = next_c;
            rows = layer.rows;
            bit_off += layer.rows;
        }
        let wrow = &out.weights[class * out.cols..(class + 1) * out.cols];
        let mut w = vec![0.0; self.input_dim];
        for j in 0..self.input_dim {
            let mut acc = 0.0;
            for k in 0..rows {
                acc += wrow[k] * amat[k * self.input_dim + j];
            }
            w[j] = acc;
        }
        let mut b = out.biases[class];
        for k in 0..rows {
            b += wrow[k] * c[k];
        }
        Ok((w, b))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("net serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: FeedforwardNet = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.cols != prev {
                return Err(Error::DimensionMismatch {
                    expected: prev,
                    got: layer.cols,
                });
            }
            if layer.weights.len() != layer.rows * layer.cols || layer.biases.len() != layer.rows {
                return Err(Error::Data(format!("layer {i}: inconsistent shape")));
            }
            if layer
                .weights
                .iter()
                .chain(layer.biases.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::Data(format!("layer {i}: non-finite parameter")));
            }
            let last = i == self.layers.len() - 1;
            match (last, layer.activation) {
                (false, Activation::Relu) => {}
                (true, Activation::Relu) => {
                    return Err(Error::Data("final layer must not be relu".into()))
                }
                (false, _) => return Err(Error::Data("hidden layers must be relu".into())),
                (true, _) => {}
            }
            prev = layer.rows;
        }
        Ok(())
    }
}

/// Per-sample loss. Predictions are clamped to `[1e-12, 1-1e-12]` before logs.
pub fn loss_value(loss: Loss, predicted: &[f64], target: &[f64]) -> f64 {
    let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    match loss {
        Loss::Bce => predicted
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let p = clamp(p);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum(),
        Loss::Ce => predicted
            .iter()
            .zip(target)
            .map(|(&p, &t)| -t * clamp(p).ln())
            .sum(),
    }
}

struct Gradients {
    dw: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &FeedforwardNet) -> Self {
        Gradients {
            dw: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            db: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        for g in self.dw.iter_mut().chain(self.db.iter_mut()) {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Accumulates the gradient of the per-sample loss into `grads`.
/// Returns the sample loss.
fn backprop_sample(
    net: &FeedforwardNet,
    x: &[f64],
    target: &[f64],
    loss: Loss,
    grads: &mut Gradients,
) -> f64 {
    // Forward, keeping post-activation values per layer.
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len() + 1);
    acts.push(x.to_vec());
    for layer in &net.layers {
        let mut pre = vec![0.0; layer.rows];
        layer.affine(acts.last().unwrap(), &mut pre);
        match layer.activation {
            Activation::Relu => pre.iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }),
            Activation::Sigmoid => pre.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                let mut out = vec![0.0; pre.len()];
                softmax_into(&pre, &mut out);
                pre = out;
            }
            Activation::Identity => {}
        }
        acts.push(pre);
    }
    let predicted = acts.last().unwrap();
    let sample_loss = loss_value(loss, predicted, target);

    // dL/dlogit for sigmoid+bce and softmax+ce both reduce to p - t.
    let mut delta: Vec<f64> = predicted.iter().zip(target).map(|(&p, &t)| p - t).collect();
    for (l, layer) in net.layers.iter().enumerate().rev() {
        let input = &acts[l];
        for r in 0..layer.rows {
            let d = delta[r];
            let wrow = &mut grads.dw[l][r * layer.cols..(r + 1) * layer.cols];
            for (g, xi) in wrow.iter_mut().zip(input) {
                *g += d * xi;
            }
            grads.db[l][r] += d;
        }
        if l == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.cols];
        for r in 0..layer.rows {
            let d = delta[r];
            let wrow = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            for (p, w) in prev.iter_mut().zip(wrow) {
                *p += d * w;
            }
        }
        // Through the preceding ReLU: zero where the unit was inactive.
        for (p, a) in prev.iter_mut().zip(&acts[l]) {
            if *a <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    sample_loss
}

/// Analytic gradient of the mean loss over `inputs`, flattened layer by
/// layer (weights then biases). Exposed for finite-difference checking.
pub fn loss_gradient(
    net: &FeedforwardNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    loss: Loss,
) -> (f64, Vec<f64>) {
    let mut grads = Gradients::zeros(net);
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        total += backprop_sample(net, x, t, loss, &mut grads);
    }
    let n = inputs.len() as f64;
    let mut flat = Vec::new();
    for (dw, db) in grads.dw.iter().zip(&grads.db) {
        flat.extend(dw.iter().map(|g| g / n));
        flat.extend(db.iter().map(|g| g / n));
    }
    (total / n, flat)
}

/// Mean loss over a dataset with the current parameters.
pub fn mean_loss(net: &FeedforwardNet, inputs: &[Vec<f64>], targets: &[Vec<f64>], loss: Loss) -> f64 {
    let total: f64 = inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| {
            let fp = net.forward(x).expect("finite training input");
            loss_value(loss, &fp.output, t)
        })
        .sum();
    total / inputs.len() as f64
}

/// Mini-batch gradient descent with momentum. Batch order is reshuffled each
/// epoch from the seeded generator; runs replay exactly for a fixed seed.
pub fn train(
    net: &mut FeedforwardNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    loss: Loss,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Data("inputs/targets length mismatch or empty".into()));
    }
    let out_act = net.layers.last().unwrap().activation;
    match (loss, out_act) {
        (Loss::Bce, Activation::Sigmoid) | (Loss::Ce, Activation::Softmax) => {}
        _ => {
            return Err(Error::Config(
                "bce requires sigmoid head, ce requires softmax head".into(),
            ))
        }
    }
    if targets.iter().flatten().any(|&t| !(0.0..=1.0).contains(&t)) {
        return Err(Error::Data("targets must lie in [0,1]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut grads = Gradients::zeros(net);
    let mut velocity = Gradients::zeros(net);
    let mut history = Vec::new();

    for epoch in 0..cfg.epochs {
        // Fisher-Yates from the run RNG.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let mut batch_loss = 0.0;
            for &idx in batch {
                batch_loss += backprop_sample(net, &inputs[idx], &targets[idx], loss, &mut grads);
            }
            epoch_loss += batch_loss;
            let scale = cfg.learning_rate / batch.len() as f64;
            for (l, layer) in net.layers.iter_mut().enumerate() {
                for (i, w) in layer.weights.iter_mut().enumerate() {
                    let v = cfg.momentum * velocity.dw[l][i] - scale * grads.dw[l][i];
                    velocity.dw[l][i] = v;
                    *w += v;
                }
                for (i, b) in layer.biases.iter_mut().enumerate() {
                    let v = cfg.momentum * velocity.db[l][i] - scale * grads.db[l][i];
                    velocity.db[l][i] = v;
                    *b += v;
                }
            }
        }
        let mean = epoch_loss / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(mean);
        if mean <= cfg.target_loss {
            break;
        }
    }
    Ok(history)
}
