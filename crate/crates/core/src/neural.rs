//! Rectifier multilayer perceptrons trained from scratch with mini-batch SGD,
//! momentum and step learning-rate decay.
//!
//! The last affine layer is the classifier; the activations entering it are
//! the network's features.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::metric::MatrixRecord;
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// Architecture of a classifier. Hidden widths are scaled by the width
/// multiplier, rounded up, with a floor of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub num_classes: usize,
    #[serde(default = "one")]
    pub width_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let a = self.width_multiplier;
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("width_multiplier must lie in (0, 1], got {a}")));
        }
        Ok(())
    }

    pub fn effective_widths(&self) -> Vec<usize> {
        self.hidden_widths
            .iter()
            .map(|&w| ((w as f64 * self.width_multiplier).ceil() as usize).max(1))
            .collect()
    }

    /// `(fan_in, fan_out)` of every affine layer, classifier last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(self.effective_widths());
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// Width of the feature layer (last hidden layer), if there is one.
    pub fn feature_dim(&self) -> Option<usize> {
        self.effective_widths().last().copied()
    }

    pub fn with_width_multiplier(&self, alpha: f64) -> Self {
        Self {
            width_multiplier: alpha,
            ..self.clone()
        }
    }
}

/// Optimisation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every_steps: u64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            decay_factor: 0.1,
            decay_every_steps: 20_000,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must lie in (0, 1]".into()));
        }
        if self.decay_every_steps == 0 {
            return Err(Error::Config("decay_every_steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// `learning_rate · decay_factor^⌊step / decay_every_steps⌋`.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        let drops = (step / self.decay_every_steps) as i32;
        self.learning_rate * self.decay_factor.powi(drops)
    }
}

/// One affine layer; `weights` is `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

static NEXT_REVISION: AtomicU64 = AtomicU64::new(1);

fn fresh_revision() -> u64 {
    NEXT_REVISION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct MlpNetwork {
    spec: MlpSpec,
    layers: Vec<Dense>,
    seed: u64,
    steps: u64,
    /// Changes on every parameter update; ties forward caches to the exact
    /// parameters that produced them.
    revision: u64,
}

impl PartialEq for MlpNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers && self.seed == other.seed && self.steps == other.steps
    }
}

/// Activations recorded by [`MlpNetwork::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer: the batch itself, then each hidden activation.
    layer_inputs: Vec<DMatrix<f64>>,
    revision: u64,
}

/// Parameter gradients (or momentum buffers), layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    bias: DVector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.amax().max(l.bias.amax()))
            .fold(0.0, f64::max)
    }
}

/// He-initialised network: weights `N(0, 2/fan_in)`, zero biases.
pub fn init_network(spec: &MlpSpec, seed: u64) -> Result<MlpNetwork> {
    spec.validate()?;
    let mut rng = seeded(seed, stream::INIT);
    let layers = spec
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let std = (2.0 / fan_in as f64).sqrt();
            let mut weights = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    weights[(r, c)] = std * z;
                }
            }
            Dense {
                weights,
                bias: DVector::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpNetwork {
        spec: spec.clone(),
        layers,
        seed,
        steps: 0,
        revision: fresh_revision(),
    })
}

fn relu_in_place(m: &mut DMatrix<f64>) {
    m.apply(|v| *v = v.max(0.0));
}

/// `x·Wᵀ + 1·bᵀ` for a row-per-example batch.
fn affine(layer: &Dense, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = x * layer.weights.transpose();
    for mut row in z.row_iter_mut() {
        row += layer.bias.transpose();
    }
    z
}

impl MlpNetwork {
    /// Builds a network from explicit layers (shapes must match `spec`).
    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>, seed: u64, steps: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::shape(shapes.len(), layers.len()));
        }
        for (&(fan_in, fan_out), l) in shapes.iter().zip(&layers) {
            if l.weights.shape() != (fan_out, fan_in) {
                return Err(Error::shape(fan_out * fan_in, l.weights.len()));
            }
            if l.bias.len() != fan_out {
                return Err(Error::shape(fan_out, l.bias.len()));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Config("network parameters must be finite".into()));
            }
        }
        Ok(Self {
            spec,
            layers,
            seed,
            steps,
            revision: fresh_revision(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.revision = fresh_revision();
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn check_input(&self, inputs: &DMatrix<f64>) -> Result<()> {
        if inputs.ncols() != self.spec.input_dim {
            return Err(Error::shape(self.spec.input_dim, inputs.ncols()));
        }
        Ok(())
    }

    /// Logits for a row-per-example batch, plus the activations needed by
    /// [`MlpNetwork::backward`].
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_input(inputs)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut a = inputs.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &a);
            if i < last {
                relu_in_place(&mut z);
            }
            layer_inputs.push(std::mem::replace(&mut a, z));
        }
        Ok((
            a,
            ForwardCache {
                layer_inputs,
                revision: self.revision,
            },
        ))
    }

    /// Logits only.
    pub fn logits(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(inputs)?.0)
    }

    /// Gradient of the batch-mean loss given the per-example loss gradients
    /// with respect to the logits (one row per example).
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &DMatrix<f64>) -> Result<Gradients> {
        if cache.revision != self.revision || cache.layer_inputs.len() != self.layers.len() {
            return Err(Error::Usage(
                "forward cache was produced by different network parameters".into(),
            ));
        }
        let batch = cache.layer_inputs[0].nrows();
        if grad_logits.shape() != (batch, self.spec.num_classes) {
            return Err(Error::Usage(format!(
                "logit gradient is {}x{}, expected {batch}x{}",
                grad_logits.nrows(),
                grad_logits.ncols(),
                self.spec.num_classes
            )));
        }
        let mut delta = grad_logits / batch as f64;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.layer_inputs[i];
            let weights = delta.transpose() * input;
            let bias = delta.row_sum().transpose();
            if i > 0 {
                let mut upstream = &delta * &layer.weights;
                upstream.zip_apply(input, |g, a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Last hidden activation for each row of `inputs`.
    pub fn extract_features(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(inputs)?;
        if self.layers.len() < 2 {
            return Err(Error::Usage("network has no hidden layer to take features from".into()));
        }
        let mut a = inputs.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            a = affine(layer, &a);
            relu_in_place(&mut a);
        }
        Ok(a)
    }

    /// Single-input feature extraction (matrix-vector products only).
    pub fn extract_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::shape(self.spec.input_dim, x.len()));
        }
        if self.layers.len() < 2 {
            return Err(Error::Usage("network has no hidden layer to take features from".into()));
        }
        let mut a = DVector::from_column_slice(x);
        for layer in &self.layers[..self.layers.len() - 1] {
            a = &layer.weights * a + &layer.bias;
            a.apply(|v| *v = v.max(0.0));
        }
        Ok(a.iter().copied().collect())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let record = NetworkRecord {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weights: (&l.weights).into(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
            seed: self.seed,
            step_count: self.steps,
        };
        let text = serde_json::to_string(&record)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: NetworkRecord = serde_json::from_str(&text)?;
        let layers = rec
            .layers
            .into_iter()
            .map(|l| {
                Ok(Dense {
                    weights: l.weights.to_matrix()?,
                    bias: DVector::from_vec(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(rec.spec, layers, rec.seed, rec.step_count)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    weights: MatrixRecord,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    spec: MlpSpec,
    layers: Vec<LayerRecord>,
    seed: u64,
    step_count: u64,
}

/// Standard softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log p_label` and its gradient `p − onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = log_sum - (logits[label] - max);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

/// `v ← μ·v − lr(step)·g;  θ ← θ + v`.
pub fn sgd_momentum_step(
    net: &mut MlpNetwork,
    grads: &Gradients,
    velocity: &mut Gradients,
    config: &TrainConfig,
    step: u64,
) -> Result<()> {
    if grads.layers.len() != net.layers.len() || velocity.layers.len() != net.layers.len() {
        return Err(Error::shape(net.layers.len(), grads.layers.len()));
    }
    let lr = config.learning_rate_at(step);
    let mu = config.momentum;
    for ((layer, g), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        if g.weights.shape() != layer.weights.shape() || v.weights.shape() != layer.weights.shape() {
            return Err(Error::shape(layer.weights.len(), g.weights.len()));
        }
        v.weights
            .zip_apply(&g.weights, |vel, grad| *vel = mu * *vel - lr * grad);
        v.bias.zip_apply(&g.bias, |vel, grad| *vel = mu * *vel - lr * grad);
        layer.weights += &v.weights;
        layer.bias += &v.bias;
    }
    net.steps = step + 1;
    net.revision = fresh_revision();
    Ok(())
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-example loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Fraction of examples classified correctly while the epoch ran.
    pub epoch_accuracy: Vec<f64>,
    pub steps: u64,
    /// Learning rate in effect at the first step of each epoch.
    pub learning_rate: Vec<f64>,
}

/// Loss of one example as returned by a training objective.
pub(crate) struct ExampleLoss {
    pub total: f64,
    /// Two named components averaged per epoch by the loop (the plain
    /// classifier reports `[total, 0]`).
    pub parts: [f64; 2],
    pub grad: Vec<f64>,
}

pub(crate) struct LoopOutput {
    pub log: TrainLog,
    pub epoch_parts: Vec<[f64; 2]>,
}

/// Shuffled mini-batch SGD over `inputs`; `objective(logits_row, index)` gives
/// the loss and logit gradient of the example at dataset position `index`.
pub(crate) fn run_training(
    net: &mut MlpNetwork,
    inputs: &DMatrix<f64>,
    labels: &[usize],
    config: &TrainConfig,
    mut objective: impl FnMut(&[f64], usize) -> ExampleLoss,
) -> Result<LoopOutput> {
    config.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::Training("empty training set".into()));
    }
    net.check_input(inputs)?;
    if labels.len() != n {
        return Err(Error::shape(n, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= net.spec.num_classes) {
        return Err(Error::Training(format!(
            "label {bad} is out of range for {} classes",
            net.spec.num_classes
        )));
    }

    let mut rng = seeded(config.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity = Gradients::zeros_like(net);
    let classes = net.spec.num_classes;
    let mut step = net.steps;
    let mut log = TrainLog {
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_accuracy: Vec::with_capacity(config.epochs),
        steps: 0,
        learning_rate: Vec::with_capacity(config.epochs),
    };
    let mut epoch_parts = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        log.learning_rate.push(config.learning_rate_at(step));
        let (mut loss_sum, mut parts_sum, mut correct) = (0.0, [0.0; 2], 0usize);
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select_rows(batch);
            let (logits, cache) = net.forward(&x)?;
            let mut grad = DMatrix::zeros(batch.len(), classes);
            for (r, &idx) in batch.iter().enumerate() {
                let row: Vec<f64> = logits.row(r).iter().copied().collect();
                if argmax(&row) == labels[idx] {
                    correct += 1;
                }
                let ex = objective(&row, idx);
                loss_sum += ex.total;
                parts_sum[0] += ex.parts[0];
                parts_sum[1] += ex.parts[1];
                for (c, g) in ex.grad.iter().enumerate() {
                    grad[(r, c)] = *g;
                }
            }
            let grads = net.backward(&cache, &grad)?;
            sgd_momentum_step(net, &grads, &mut velocity, config, step)?;
            step += 1;
            log.steps += 1;
        }
        log.epoch_loss.push(loss_sum / n as f64);
        log.epoch_accuracy.push(correct as f64 / n as f64);
        epoch_parts.push(parts_sum.map(|s| s / n as f64));
    }
    Ok(LoopOutput { log, epoch_parts })
}

/// Trains a freshly initialised classifier with softmax cross-entropy.
/// Initialisation and shuffling both derive from `config.seed`.
pub fn train_classifier(
    spec: &MlpSpec,
    inputs: &DMatrix<f64>,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(MlpNetwork, TrainLog)> {
    let mut net = init_network(spec, config.seed)?;
    let out = run_training(&mut net, inputs, labels, config, |logits, idx| {
        let (loss, grad) = softmax_cross_entropy(logits, labels[idx]);
        ExampleLoss {
            total: loss,
            parts: [loss, 0.0],
            grad,
        }
    })?;
    Ok((net, out.log))
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy(net: &MlpNetwork, inputs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let logits = net.logits(inputs)?;
    let correct = (0..logits.nrows())
        .filter(|&r| {
            let row: Vec<f64> = logits.row(r).iter().copied().collect();
            argmax(&row) == labels[r]
        })
        .count();
    Ok(correct as f64 / inputs.nrows().max(1) as f64)
}

/// Row-per-input matrix from slices.
pub fn input_matrix(rows: &[&[f64]]) -> Result<DMatrix<f64>> {
    let dim = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::shape(dim, bad.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]))
}
