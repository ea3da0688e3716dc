//! Dense feed-forward networks with exact backpropagation and Adam.
//!
//! Weights are stored `(in, out)` so a batch `X` of shape `(batch, in)` maps to
//! `X · W + b`. All arithmetic is `f64`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng::rng_from_seed;

/// Row-major batch of points or activations, one row per sample.
pub type Matrix = Array2<f64>;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
            Activation::Sigmoid => z.mapv(sigmoid),
        }
    }

    /// Multiplies `grad` (dL/da) in place by da/dz.
    fn chain(self, grad: &mut Matrix, pre: &Matrix, post: &Matrix) {
        match self {
            Activation::Relu => Zip::from(grad).and(pre).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Identity => {}
            Activation::Sigmoid => Zip::from(grad).and(post).for_each(|g, &a| *g *= a * (1.0 - a)),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine map followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.ncols()
    }
}

/// A stack of [`Dense`] layers with consistent widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dense>", into = "Vec<Dense>")]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl TryFrom<Vec<Dense>> for Mlp {
    type Error = Error;

    fn try_from(layers: Vec<Dense>) -> Result<Self> {
        Mlp::new(layers)
    }
}

impl From<Mlp> for Vec<Dense> {
    fn from(m: Mlp) -> Self {
        m.layers
    }
}

/// Activations recorded by [`Mlp::forward`] for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `activations[l]` is the input to layer `l`; the last entry is the network output.
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache always holds the input")
    }

    /// Post-activation output of layer `layer`.
    pub fn layer_output(&self, layer: usize) -> Option<&Matrix> {
        self.activations.get(layer + 1)
    }

    pub fn pre_activation(&self, layer: usize) -> Option<&Matrix> {
        self.pre_activations.get(layer)
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(shape_err(
                    "layer chain",
                    format!("layer {} input width {}", i + 1, pair[0].output_width()),
                    pair[1].input_width(),
                ));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.output_width() {
                return Err(shape_err("bias length", layer.output_width(), layer.bias.len()));
            }
        }
        Ok(Self { layers })
    }

    /// Builds a network with Glorot-initialized layers over `widths`
    /// (`widths.len() - 1` layers). Hidden layers use `hidden`, the last uses `output`.
    pub fn with_topology(widths: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidInput(format!("topology {widths:?} has no layers")));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidInput(format!("topology {widths:?} has a zero width")));
        }
        let mut rng = rng_from_seed(seed);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::glorot(w[0], w[1], if i == last { output } else { hidden }, &mut rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(Dense::output_width))
            .collect()
    }

    /// Widths plus activations; two networks with equal topology are interchangeable.
    pub fn topology(&self) -> Vec<(usize, usize, Activation)> {
        self.layers
            .iter()
            .map(|l| (l.input_width(), l.output_width(), l.activation))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.ncols() != self.input_width() {
            return Err(shape_err("forward input", self.input_width(), batch.ncols()));
        }
        Ok(())
    }

    /// Output only, without recording a cache.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.predict_partial(batch, self.layers.len())
    }

    /// Output of the first `depth` layers.
    pub fn predict_partial(&self, batch: &Matrix, depth: usize) -> Result<Matrix> {
        self.check_input(batch)?;
        if depth > self.layers.len() {
            return Err(shape_err("partial forward depth", self.layers.len(), depth));
        }
        let mut a = batch.to_owned();
        for layer in &self.layers[..depth] {
            let z = a.dot(&layer.weight) + &layer.bias;
            a = layer.activation.apply(&z);
        }
        Ok(a)
    }

    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(batch.to_owned());
        for layer in &self.layers {
            let z = activations.last().unwrap().dot(&layer.weight) + &layer.bias;
            activations.push(layer.activation.apply(&z));
            pre_activations.push(z);
        }
        let cache = ForwardCache {
            activations,
            pre_activations,
        };
        Ok((cache.output().clone(), cache))
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.pre_activations.len() != self.layers.len() {
            return Err(shape_err("cache depth", self.layers.len(), cache.pre_activations.len()));
        }
        for (layer, (input, pre)) in self
            .layers
            .iter()
            .zip(cache.activations.iter().zip(&cache.pre_activations))
        {
            if input.ncols() != layer.input_width() || pre.ncols() != layer.output_width() {
                return Err(shape_err(
                    "cache layer widths",
                    format!("{}x{}", layer.input_width(), layer.output_width()),
                    format!("{}x{}", input.ncols(), pre.ncols()),
                ));
            }
        }
        Ok(())
    }

    /// Backpropagates `grad_output` (dL/d output) through the cached pass.
    /// Returns parameter gradients and dL/d input.
    pub fn backprop(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(Gradients, Matrix)> {
        self.check_cache(cache)?;
        if grad_output.dim() != cache.output().dim() {
            return Err(shape_err(
                "output gradient",
                format!("{:?}", cache.output().dim()),
                format!("{:?}", grad_output.dim()),
            ));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = grad_output.to_owned();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            layer
                .activation
                .chain(&mut delta, &cache.pre_activations[l], &cache.activations[l + 1]);
            weights.push(cache.activations[l].t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&layer.weight.t());
        }
        weights.reverse();
        biases.reverse();
        Ok((Gradients { weights, biases }, delta))
    }

    /// Loss value and parameter gradients for a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, target: Target<'_>) -> Result<(f64, Gradients)> {
        let (loss, grad_out) = target.loss_and_output_gradient(cache.output())?;
        let (grads, _) = self.backprop(cache, &grad_out)?;
        Ok((loss, grads))
    }

    /// Loss of a fresh forward pass; used by finite-difference checks.
    pub fn loss(&self, batch: &Matrix, target: Target<'_>) -> Result<f64> {
        let out = self.predict(batch)?;
        Ok(target.loss_and_output_gradient(&out)?.0)
    }
}

/// What the network output is compared against.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    /// Mean squared reconstruction error against these rows.
    Reconstruction(&'a Matrix),
    /// Softmax cross-entropy of two logits against 0/1 labels.
    Labels(&'a [u8]),
}

impl Target<'_> {
    fn loss_and_output_gradient(&self, output: &Matrix) -> Result<(f64, Matrix)> {
        match *self {
            Target::Reconstruction(target) => {
                let loss = mse_loss(output, target)?;
                let scale = 2.0 / output.nrows() as f64;
                Ok((loss, (output - target) * scale))
            }
            Target::Labels(labels) => {
                if output.ncols() != 2 {
                    return Err(shape_err("classifier logits", 2, output.ncols()));
                }
                if labels.len() != output.nrows() {
                    return Err(shape_err("label count", output.nrows(), labels.len()));
                }
                let probs = softmax_class1(output);
                let loss = bce_loss(probs.as_slice().unwrap(), labels)?;
                let scale = 1.0 / output.nrows() as f64;
                let mut grad = Matrix::zeros(output.raw_dim());
                for (i, (&p1, &l)) in probs.iter().zip(labels).enumerate() {
                    let y = f64::from(l);
                    grad[[i, 0]] = ((1.0 - p1) - (1.0 - y)) * scale;
                    grad[[i, 1]] = (p1 - y) * scale;
                }
                Ok((loss, grad))
            }
        }
    }
}

/// Class-1 softmax probability of each row of a two-column logit matrix.
pub fn softmax_class1(logits: &Matrix) -> Array1<f64> {
    logits.rows().into_iter().map(|r| sigmoid(r[1] - r[0])).collect()
}

/// Mean over rows of the squared L2 distance between `reconstruction` and `target`.
pub fn mse_loss(reconstruction: &Matrix, target: &Matrix) -> Result<f64> {
    if reconstruction.dim() != target.dim() {
        return Err(shape_err(
            "mse operands",
            format!("{:?}", target.dim()),
            format!("{:?}", reconstruction.dim()),
        ));
    }
    if target.nrows() == 0 {
        return Err(Error::InvalidInput("mse of an empty batch".into()));
    }
    let sum: f64 = Zip::from(reconstruction)
        .and(target)
        .fold(0.0, |acc, &r, &t| acc + (r - t) * (r - t));
    Ok(sum / target.nrows() as f64)
}

/// Mean binary cross-entropy of class-1 probabilities against labels.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("cross-entropy of an empty batch".into()));
    }
    if probs.len() != labels.len() {
        return Err(shape_err("cross-entropy operands", probs.len(), labels.len()));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if l == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Per-parameter gradients with the same shapes as an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Matrix::zeros(l.weight.raw_dim())).collect(),
            biases: model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    fn matches(&self, model: &Mlp) -> bool {
        self.weights.len() == model.layers.len()
            && self.biases.len() == model.layers.len()
            && model
                .layers
                .iter()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(l, (w, b))| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }

    /// All entries flattened layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one network.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Gradients,
    second: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(model: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `model` in place.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(model) || !self.first.matches(model) {
            return Err(shape_err(
                "adam step",
                format!("{:?}", model.widths()),
                "gradients or moments of another topology",
            ));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (l, layer) in model.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&mut self.first.weights[l])
                .and(&mut self.second.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.first.biases[l])
                .and(&mut self.second.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
