//! Small from-scratch multilayer perceptron: dense layers, ReLU hidden
//! activations, softmax cross-entropy loss, mini-batch SGD.
//!
//! Everything works on plain `Vec<f64>` so that model weights can be clipped,
//! perturbed, split into scalar reports and averaged without any conversion.
//! Throughout, a "parameter offset" within a layer counts the row-major
//! weight matrix entries first, then the biases; that ordering is the
//! canonical flat view used by reporting and aggregation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// One dense layer, `out_dim x in_dim` weights stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Weight-matrix entries plus biases.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Flat read at `offset` (weights first, then biases).
    pub fn param(&self, offset: usize) -> f64 {
        if offset < self.weights.len() {
            self.weights[offset]
        } else {
            self.bias[offset - self.weights.len()]
        }
    }

    /// Flat write at `offset`.
    pub fn set_param(&mut self, offset: usize, value: f64) {
        if offset < self.weights.len() {
            self.weights[offset] = value;
        } else {
            self.bias[offset - self.weights.len()] = value;
        }
    }
}

/// Full parameter set of an MLP. Also doubles as a gradient container, since
/// gradients have exactly the model's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub layers: Vec<DenseLayer>,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::BadArchitecture(format!(
            "need at least input and output dimensions, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::BadArchitecture(format!(
            "zero-width layer in {dims:?}"
        )));
    }
    Ok(())
}

impl ModelWeights {
    /// All-zero model for the given `[input, hidden..., output]` widths.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            layers: dims
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// Uniform Xavier initialization: weights drawn from
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    pub fn xavier(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let scales = vec![1.0; dims.len().saturating_sub(1)];
        Self::xavier_scaled(dims, &scales, rng)
    }

    /// Xavier initialization with a per-layer multiplier on the init limit;
    /// used to build models whose layers live at very different weight
    /// scales.
    pub fn xavier_scaled(dims: &[usize], scales: &[f64], rng: &mut impl Rng) -> Result<Self> {
        validate_dims(dims)?;
        if scales.len() != dims.len() - 1 {
            return Err(Error::BadArchitecture(format!(
                "{} init scales for {} layers",
                scales.len(),
                dims.len() - 1
            )));
        }
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::BadArchitecture(format!(
                "init scales must be positive and finite, got {scales:?}"
            )));
        }
        let mut model = Self::zeros(dims)?;
        for (layer, &scale) in model.layers.iter_mut().zip(scales) {
            let limit = scale * (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// `[input, hidden..., output]` widths.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("no layers").out_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.parameter_count()).sum()
    }

    /// `self <- self + factor * other`, used for SGD steps (factor = -lr).
    pub fn add_scaled(&mut self, other: &ModelWeights, factor: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.in_dim != b.in_dim || a.out_dim != b.out_dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}x{} vs {}x{}",
                    a.out_dim, a.in_dim, b.out_dim, b.in_dim
                )));
            }
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += factor * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += factor * y;
            }
        }
        Ok(())
    }
}

/// Logits for a batch: `features` holds `batch` rows of `input_dim` values,
/// the result holds `batch` rows of `output_dim` values.
pub fn logits(model: &ModelWeights, features: &[f64], batch: usize) -> Result<Vec<f64>> {
    if features.len() != batch * model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature values do not tile {} rows of dimension {}",
            features.len(),
            batch,
            model.input_dim()
        )));
    }
    let mut activation = features.to_vec();
    let last = model.layers.len() - 1;
    for (index, layer) in model.layers.iter().enumerate() {
        let mut z = affine(layer, &activation, batch);
        if index != last {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        activation = z;
    }
    Ok(activation)
}

/// `z = a W^T + b` for a batch of rows.
fn affine(layer: &DenseLayer, activation: &[f64], batch: usize) -> Vec<f64> {
    let mut z = vec![0.0; batch * layer.out_dim];
    for b in 0..batch {
        let row = &activation[b * layer.in_dim..(b + 1) * layer.in_dim];
        let out = &mut z[b * layer.out_dim..(b + 1) * layer.out_dim];
        for (o, out_v) in out.iter_mut().enumerate() {
            let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            let mut s = layer.bias[o];
            for (w, a) in w_row.iter().zip(row) {
                s += w * a;
            }
            *out_v = s;
        }
    }
    z
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy and its gradient with respect to every
/// parameter, over one batch.
///
/// Softmax is computed with per-row max subtraction, so saturated logits
/// yield zero gradients rather than NaN.
pub fn loss_and_gradient(
    model: &ModelWeights,
    features: &[f64],
    labels: &[usize],
) -> Result<(f64, ModelWeights)> {
    let batch = labels.len();
    if batch == 0 {
        return Err(Error::EmptyAggregate("training batch"));
    }
    if features.len() != batch * model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature values do not tile {} rows of dimension {}",
            features.len(),
            batch,
            model.input_dim()
        )));
    }
    check_labels(labels, model.output_dim())?;

    // Forward pass, caching inputs and pre-activations of every layer.
    let last = model.layers.len() - 1;
    let mut activations: Vec<Vec<f64>> = vec![features.to_vec()];
    let mut pre_activations: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len());
    for (index, layer) in model.layers.iter().enumerate() {
        let z = affine(layer, activations.last().expect("input"), batch);
        pre_activations.push(z.clone());
        let mut a = z;
        if index != last {
            for v in &mut a {
                *v = v.max(0.0);
            }
        }
        activations.push(a);
    }

    // Softmax cross-entropy on the logits.
    let classes = model.output_dim();
    let logits = activations.last().expect("logits");
    let mut loss = 0.0;
    let mut delta = vec![0.0; batch * classes]; // dL/dz for the last layer
    for b in 0..batch {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for &v in row {
            sum_exp += (v - max).exp();
        }
        loss += max + sum_exp.ln() - row[labels[b]];
        let d = &mut delta[b * classes..(b + 1) * classes];
        for (o, &v) in row.iter().enumerate() {
            d[o] = (v - max).exp() / sum_exp;
        }
        d[labels[b]] -= 1.0;
    }
    let inv_batch = 1.0 / batch as f64;
    loss *= inv_batch;
    for d in &mut delta {
        *d *= inv_batch;
    }

    // Backward pass.
    let mut grads = ModelWeights::zeros(&model.dims())?;
    for index in (0..model.layers.len()).rev() {
        let layer = &model.layers[index];
        let grad = &mut grads.layers[index];
        let input = &activations[index];
        for b in 0..batch {
            let d = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
            let a = &input[b * layer.in_dim..(b + 1) * layer.in_dim];
            for (o, &dv) in d.iter().enumerate() {
                grad.bias[o] += dv;
                let g_row = &mut grad.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &av) in g_row.iter_mut().zip(a) {
                    *g += dv * av;
                }
            }
        }
        if index > 0 {
            // delta for the previous layer: (delta W) gated by its ReLU.
            let prev_z = &pre_activations[index - 1];
            let mut prev_delta = vec![0.0; batch * layer.in_dim];
            for b in 0..batch {
                let d = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
                let pd = &mut prev_delta[b * layer.in_dim..(b + 1) * layer.in_dim];
                for (o, &dv) in d.iter().enumerate() {
                    let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, &wv) in pd.iter_mut().zip(w_row) {
                        *p += dv * wv;
                    }
                }
                let z = &prev_z[b * layer.in_dim..(b + 1) * layer.in_dim];
                for (p, &zv) in pd.iter_mut().zip(z) {
                    if zv <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
    }
    Ok((loss, grads))
}

/// Mean softmax cross-entropy of the model over a whole dataset.
pub fn mean_cross_entropy(model: &ModelWeights, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyAggregate("dataset"));
    }
    check_labels(data.labels(), model.output_dim())?;
    let classes = model.output_dim();
    let mut loss = 0.0;
    for i in 0..data.len() {
        let row_logits = logits(model, data.row(i), 1)?;
        let max = row_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for &v in &row_logits[..classes] {
            sum_exp += (v - max).exp();
        }
        loss += max + sum_exp.ln() - row_logits[data.label(i)];
    }
    Ok(loss / data.len() as f64)
}

/// Mini-batch SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::CountTooSmall {
                what: "batch size",
                got: 0,
            });
        }
        Ok(())
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainStats {
    /// Sample-weighted mean of the batch losses seen in each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains in place: each epoch reshuffles the row order and sweeps it in
/// batches (final partial batch included), stepping `w -= lr * grad` after
/// each batch.
pub fn sgd_epochs(
    model: &mut ModelWeights,
    data: &Dataset,
    config: &SgdConfig,
    rng: &mut impl Rng,
) -> Result<TrainStats> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyAggregate("training data"));
    }
    if data.feature_dim() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dimension {} vs model input {}",
            data.feature_dim(),
            model.input_dim()
        )));
    }
    check_labels(data.labels(), model.output_dim())?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch_features = Vec::with_capacity(config.batch_size * data.feature_dim());
    let mut batch_labels = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_features.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_features.extend_from_slice(data.row(i));
                batch_labels.push(data.label(i));
            }
            let (loss, grads) = loss_and_gradient(model, &batch_features, &batch_labels)?;
            model.add_scaled(&grads, -config.learning_rate)?;
            loss_sum += loss * chunk.len() as f64;
        }
        epoch_losses.push(loss_sum / data.len() as f64);
    }
    Ok(TrainStats { epoch_losses })
}

/// Classification accuracy with lowest-index tie breaking on the argmax.
pub fn evaluate(model: &ModelWeights, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyAggregate("evaluation data"));
    }
    check_labels(data.labels(), model.output_dim())?;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let row_logits = logits(model, data.row(i), 1)?;
        if argmax(&row_logits) == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
