//! Small dense feed-forward network engine shared by the black-box
//! classifier and the denoising autoencoder.
//!
//! Batches are row-major: one sample per row. Layer weights are stored as
//! `out x in` matrices so a single sample maps as `act(W x + b)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, AlimeError, Result};

/// Probability floor used inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.apply(|v| *v = sigmoid(*v)),
            Activation::Identity => {}
            Activation::Softmax => {
                for mut row in z.row_iter_mut() {
                    let max = row.max();
                    row.apply(|v| *v = (*v - max).exp());
                    let sum = row.sum();
                    row /= sum;
                }
            }
        }
    }

    /// Chain rule through the activation given its output `a` and pre-activation `z`.
    fn backward(self, grad_out: &DMatrix<f64>, z: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => grad_out.zip_map(z, |g, z| if z > 0.0 { g } else { 0.0 }),
            Activation::Sigmoid => grad_out.zip_map(a, |g, a| g * a * (1.0 - a)),
            Activation::Identity => grad_out.clone(),
            Activation::Softmax => {
                let mut out = grad_out.clone();
                for (mut row, p) in out.row_iter_mut().zip(a.row_iter()) {
                    let dot = row.dot(&p);
                    row.zip_apply(&p, |g, p| *g = p * (*g - dot));
                }
                out
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Cross-entropy against class-probability targets.
    Bce,
    /// Mean squared error over every output element.
    Mse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    // Explicit loops keep each row's summation order independent of batch size,
    // so batched and single-row forwards agree bitwise.
    fn pre_activation(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, n_in, n_out) = (input.nrows(), self.input_dim(), self.output_dim());
        let mut z = DMatrix::zeros(n, n_out);
        for r in 0..n {
            for j in 0..n_out {
                let mut acc = self.bias[j];
                for i in 0..n_in {
                    acc += self.weights[(j, i)] * input[(r, i)];
                }
                z[(r, j)] = acc;
            }
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl MlpModel {
    /// Assembles a model from explicit layers, checking width chaining.
    pub fn from_layers(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(AlimeError::config("input width must be positive"));
        }
        if layers.is_empty() {
            return Err(AlimeError::config("model needs at least one layer"));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_dim() != width {
                return Err(AlimeError::config(format!(
                    "layer {i} expects width {}, previous layer produces {width}",
                    layer.input_dim()
                )));
            }
            if layer.output_dim() == 0 {
                return Err(AlimeError::config(format!("layer {i} has zero width")));
            }
            if layer.bias.len() != layer.output_dim() {
                return Err(AlimeError::config(format!("layer {i} bias length mismatch")));
            }
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(AlimeError::config("softmax is only allowed on the final layer"));
            }
            width = layer.output_dim();
        }
        Ok(MlpModel { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(DenseLayer::output_dim).unwrap_or(self.input_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Splits the layer stack at `at`, yielding `(layers[..at], layers[at..])`.
    pub fn split_at(&self, at: usize) -> Result<(MlpModel, MlpModel)> {
        if at == 0 || at >= self.layers.len() {
            return Err(AlimeError::config(format!(
                "cannot split a {}-layer model at {at}",
                self.layers.len()
            )));
        }
        let head = MlpModel::from_layers(self.input_dim, self.layers[..at].to_vec())?;
        let tail = MlpModel::from_layers(head.output_dim(), self.layers[at..].to_vec())?;
        Ok((head, tail))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim, x.len())?;
        let input = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.forward_batch(&input)?.iter().copied().collect())
    }

    /// Forward pass over a batch, one sample per row.
    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len(self.input_dim, inputs.ncols())?;
        let mut a = inputs.clone();
        for layer in &self.layers {
            let mut z = layer.pre_activation(&a);
            layer.activation.apply(&mut z);
            a = z;
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(AlimeError::NumericOverflow("forward pass".into()));
        }
        Ok(a)
    }

    fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights -= &g.weights * lr;
            layer.bias -= &g.bias * lr;
        }
    }

    /// Flat parameter view in layer order (weights row-major, then bias).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            for r in 0..layer.weights.nrows() {
                out.extend(layer.weights.row(r).iter());
            }
            out.extend(layer.bias.iter());
        }
        out
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let (rows, cols) = layer.weights.shape();
            if index < rows * cols {
                return &mut layer.weights[(index / cols, index % cols)];
            }
            index -= rows * cols;
            if index < rows {
                return &mut layer.bias[index];
            }
            index -= rows;
        }
        panic!("parameter index out of range");
    }
}

/// Gradient of a scalar loss with respect to every parameter of an [`MlpModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: DMatrix::zeros(l.output_dim(), l.input_dim()),
                    bias: DVector::zeros(l.output_dim()),
                })
                .collect(),
        }
    }

    /// Same ordering as [`MlpModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            for r in 0..g.weights.nrows() {
                out.extend(g.weights.row(r).iter());
            }
            out.extend(g.bias.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
    pub fn max_relative_error(&self, other: &Gradients, floor: f64) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    pub fn new(loss: Loss, seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.05,
            seed,
            loss,
        }
    }

    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(AlimeError::config("epochs and batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(AlimeError::config("learning rate must be finite and non-negative"));
        }
        if self.batch_size > n_rows {
            return Err(AlimeError::config(format!(
                "batch size {} exceeds {n_rows} training rows",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Loss over the full training set after each epoch.
    pub loss_history: Vec<f64>,
}

/// Builds a model with Glorot-uniform weights and zero biases.
pub fn init_model(dims: &[usize], activations: &[Activation], seed: u64) -> Result<MlpModel> {
    if dims.len() < 2 {
        return Err(AlimeError::config("need at least input and output widths"));
    }
    if activations.len() != dims.len() - 1 {
        return Err(AlimeError::config(format!(
            "{} activations given for {} layers",
            activations.len(),
            dims.len() - 1
        )));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(AlimeError::config(format!("width at position {pos} is zero")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .zip(activations)
        .map(|(w, &activation)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                DMatrix::from_row_iterator(fan_out, fan_in, (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            DenseLayer {
                weights,
                bias: DVector::zeros(fan_out),
                activation,
            }
        })
        .collect();
    MlpModel::from_layers(dims[0], layers)
}

/// Mean loss over a batch and its gradient by backpropagation.
pub fn loss_and_grad(
    model: &MlpModel,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    loss: Loss,
) -> Result<(f64, Gradients)> {
    check_len(model.input_dim, inputs.ncols())?;
    check_len(model.output_dim(), targets.ncols())?;
    check_len(inputs.nrows(), targets.nrows())?;
    let batch = inputs.nrows();
    if batch == 0 {
        return Err(AlimeError::config("empty batch"));
    }

    // cache pre-activations and activations
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    acts.push(inputs.clone());
    for layer in &model.layers {
        let z = layer.pre_activation(acts.last().expect("input present"));
        let mut a = z.clone();
        layer.activation.apply(&mut a);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(AlimeError::NumericOverflow("activations".into()));
        }
        pre.push(z);
        acts.push(a);
    }
    let output = acts.last().expect("at least one layer");
    let final_act = model.layers.last().expect("at least one layer").activation;
    let (value, mut grad) = loss_value_and_output_grad(output, targets, loss, final_act)?;
    if !value.is_finite() {
        return Err(AlimeError::NumericOverflow("loss".into()));
    }

    let mut grads = Gradients::zeros_like(model);
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let dz = layer.activation.backward(&grad, &pre[l], &acts[l + 1]);
        grads.layers[l].weights = dz.transpose() * &acts[l];
        grads.layers[l].bias = dz.row_sum().transpose();
        if l > 0 {
            grad = dz * &layer.weights;
        }
    }
    Ok((value, grads))
}

fn loss_value_and_output_grad(
    output: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    loss: Loss,
    final_act: Activation,
) -> Result<(f64, DMatrix<f64>)> {
    let batch = output.nrows() as f64;
    match loss {
        Loss::Mse => {
            let diff = output - targets;
            let count = output.len() as f64;
            Ok((diff.norm_squared() / count, diff * (2.0 / count)))
        }
        Loss::Bce => match final_act {
            Activation::Softmax => {
                let mut value = 0.0;
                let grad = output.zip_map(targets, |p, t| {
                    if p > PROB_FLOOR {
                        value -= t * p.ln();
                        -t / (p * batch)
                    } else {
                        value -= t * PROB_FLOOR.ln();
                        0.0
                    }
                });
                Ok((value / batch, grad))
            }
            Activation::Sigmoid => {
                let mut value = 0.0;
                let grad = output.zip_map(targets, |p, t| {
                    let mut g = 0.0;
                    if p > PROB_FLOOR {
                        value -= t * p.ln();
                        g -= t / p;
                    } else {
                        value -= t * PROB_FLOOR.ln();
                    }
                    if 1.0 - p > PROB_FLOOR {
                        value -= (1.0 - t) * (1.0 - p).ln();
                        g += (1.0 - t) / (1.0 - p);
                    } else {
                        value -= (1.0 - t) * PROB_FLOOR.ln();
                    }
                    g / batch
                });
                Ok((value / batch, grad))
            }
            other => Err(AlimeError::config(format!(
                "cross-entropy needs a softmax or sigmoid output layer, found {other:?}"
            ))),
        },
    }
}

/// Mean loss only; used for monitoring and by the finite-difference check.
pub fn loss_value(model: &MlpModel, inputs: &DMatrix<f64>, targets: &DMatrix<f64>, loss: Loss) -> Result<f64> {
    check_len(model.output_dim(), targets.ncols())?;
    let output = model.forward_batch(inputs)?;
    let final_act = model.layers.last().expect("at least one layer").activation;
    Ok(loss_value_and_output_grad(&output, targets, loss, final_act)?.0)
}

/// Central finite-difference estimate of the loss gradient, one parameter at
/// a time. Independent of the backpropagation path.
pub fn finite_difference_gradients(
    model: &MlpModel,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    loss: Loss,
    h: f64,
) -> Result<Gradients> {
    let mut probe = model.clone();
    let mut grads = Gradients::zeros_like(model);
    let mut flat = Vec::with_capacity(model.n_params());
    for i in 0..model.n_params() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = loss_value(&probe, inputs, targets, loss)?;
        *probe.param_mut(i) = orig - h;
        let down = loss_value(&probe, inputs, targets, loss)?;
        *probe.param_mut(i) = orig;
        flat.push((up - down) / (2.0 * h));
    }
    let mut it = flat.into_iter();
    for g in &mut grads.layers {
        let cols = g.weights.ncols();
        for r in 0..g.weights.nrows() {
            for c in 0..cols {
                g.weights[(r, c)] = it.next().expect("gradient length");
            }
        }
        for b in g.bias.iter_mut() {
            *b = it.next().expect("gradient length");
        }
    }
    Ok(grads)
}

fn gather_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Plain mini-batch SGD with a seeded shuffle every epoch.
pub fn train(model: &MlpModel, inputs: &DMatrix<f64>, targets: &DMatrix<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_denoising(model, inputs, targets, cfg, None)
}

/// Like [`train`], but when `noise_sigma` is set every epoch sees a fresh
/// Gaussian corruption of `inputs` while `targets` stay clean.
pub fn train_denoising(
    model: &MlpModel,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    cfg: &TrainConfig,
    noise_sigma: Option<f64>,
) -> Result<TrainOutcome> {
    check_len(inputs.nrows(), targets.nrows())?;
    check_len(model.input_dim, inputs.ncols())?;
    check_len(model.output_dim(), targets.ncols())?;
    cfg.validate(inputs.nrows())?;

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.nrows()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let epoch_inputs = match noise_sigma {
            Some(sigma) => inputs.map(|v| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                v + sigma * eps
            }),
            None => inputs.clone(),
        };
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = gather_rows(&epoch_inputs, chunk);
            let yb = gather_rows(targets, chunk);
            let (value, grads) = match loss_and_grad(&model, &xb, &yb, cfg.loss) {
                Ok(r) => r,
                Err(AlimeError::NumericOverflow(_)) => return Err(AlimeError::TrainingDiverged { epoch }),
                Err(e) => return Err(e),
            };
            if !value.is_finite() {
                return Err(AlimeError::TrainingDiverged { epoch });
            }
            model.apply_step(&grads, cfg.learning_rate);
        }
        let epoch_loss = match loss_value(&model, &epoch_inputs, targets, cfg.loss) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(AlimeError::NumericOverflow(_)) => return Err(AlimeError::TrainingDiverged { epoch }),
            Err(e) => return Err(e),
        };
        log::trace!("epoch {epoch}: loss {epoch_loss:.6}");
        loss_history.push(epoch_loss);
    }
    Ok(TrainOutcome { model, loss_history })
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

pub const MODEL_FORMAT: &str = "alime-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// `output_dim` rows of `input_dim` values.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub layers: Vec<LayerDocument>,
}

impl From<&MlpModel> for ModelDocument {
    fn from(model: &MlpModel) -> Self {
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            input_dim: model.input_dim,
            layers: model
                .layers
                .iter()
                .map(|l| LayerDocument {
                    input_dim: l.input_dim(),
                    output_dim: l.output_dim(),
                    activation: l.activation,
                    weights: l.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelDocument> for MlpModel {
    type Error = AlimeError;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(AlimeError::config(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                if l.weights.len() != l.output_dim || l.weights.iter().any(|r| r.len() != l.input_dim) {
                    return Err(AlimeError::config(format!("layer {i} weight array has the wrong shape")));
                }
                Ok(DenseLayer {
                    weights: DMatrix::from_row_iterator(l.output_dim, l.input_dim, l.weights.into_iter().flatten()),
                    bias: DVector::from_vec(l.bias),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpModel::from_layers(doc.input_dim, layers)
    }
}

impl Serialize for MlpModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MlpModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(d)?;
        MlpModel::try_from(doc).map_err(serde::de::Error::custom)
    }
}
