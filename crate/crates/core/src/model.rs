//! Feedforward classifiers of the form `h(x) = W f(x) + b`: a stack of ReLU
//! feature layers `f` followed by a linear logit layer.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One affine layer; `weights` is `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(format!(
                "layer with {} outputs given {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Layer { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|i| crate::numerics::dot(self.weights.row(i), x) + self.bias[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScale {
    /// Standard deviation `sqrt(2 / fan_in)`.
    #[default]
    He,
    /// Standard deviation `sqrt(1 / fan_in)`.
    Lecun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: InitScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            init_scale: InitScale::He,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParam("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scalar objectives for input-space gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class")]
pub enum Objective {
    /// The raw logit of the class.
    Logit(usize),
    /// The log-softmax probability of the class.
    LogProb(usize),
}

impl Objective {
    pub fn class(self) -> usize {
        match self {
            Objective::Logit(c) | Objective::LogProb(c) => c,
        }
    }

    pub fn evaluate(self, logits: &[f64]) -> f64 {
        match self {
            Objective::Logit(c) => logits[c],
            Objective::LogProb(c) => log_softmax(logits)[c],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Layer>,
}

struct ForwardCache {
    /// `activations[0]` is the input; `activations[i]` feeds layer `i`.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values of each hidden layer.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<MlpClassifier> {
    init_model_with(layer_dims, seed, InitScale::He)
}

/// Gaussian weights with per-layer fan-in scaling, zero biases.
pub fn init_model_with(layer_dims: &[usize], seed: u64, scale: InitScale) -> Result<MlpClassifier> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::InvalidParam(format!(
            "layer_dims needs at least two positive entries, got {layer_dims:?}"
        )));
    }
    if *layer_dims.last().unwrap() < 2 {
        return Err(Error::InvalidParam("classifier needs at least two outputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = match scale {
                InitScale::He => 2.0,
                InitScale::Lecun => 1.0,
            };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            let weights = Matrix::from_fn(fan_out, fan_in, |_, _| normal.sample(&mut rng));
            Layer {
                weights,
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpClassifier { layers })
}

impl MlpClassifier {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParam("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::shape(format!(
                    "layer with {} outputs feeds layer with {} inputs",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        if layers.last().unwrap().outputs() < 2 {
            return Err(Error::InvalidParam("classifier needs at least two outputs".into()));
        }
        Ok(MlpClassifier { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.logit_layer().inputs()
    }

    pub fn num_outputs(&self) -> usize {
        self.logit_layer().outputs()
    }

    pub fn logit_layer(&self) -> &Layer {
        self.layers.last().expect("non-empty")
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input of length {} for model expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let hidden = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(hidden);
        activations.push(x.to_vec());
        for layer in &self.layers[..hidden] {
            let z = layer.apply(activations.last().unwrap());
            activations.push(z.iter().map(|&v| v.max(0.0)).collect());
            pre.push(z);
        }
        let logits = self.logit_layer().apply(activations.last().unwrap());
        ForwardCache {
            activations,
            pre,
            logits,
        }
    }

    /// Returns `(f(x), W f(x) + b)`; no softmax is applied.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let mut cache = self.forward_cached(x);
        let features = cache.activations.pop().expect("input is always cached");
        Ok((features, cache.logits))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_cached(x).logits)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Logits for every row of `inputs`.
    pub fn predict_logits(&self, inputs: &Matrix) -> Result<Vec<Vec<f64>>> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "inputs have {} columns, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok((0..inputs.rows())
            .map(|i| self.forward_cached(inputs.row(i)).logits)
            .collect())
    }

    /// Backpropagates `grad_logits` and returns the gradient with respect to
    /// the input. Parameter gradients are accumulated into `param_grads`
    /// when given.
    fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: Vec<f64>,
        mut param_grads: Option<&mut [Layer]>,
    ) -> Vec<f64> {
        let mut grad = grad_logits;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[idx];
            if let Some(grads) = param_grads.as_deref_mut() {
                let g = &mut grads[idx];
                for (o, &go) in grad.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    g.bias[o] += go;
                    for (w, &xi) in g.weights.row_mut(o).iter_mut().zip(input) {
                        *w += go * xi;
                    }
                }
            }
            let mut grad_in = vec![0.0; layer.inputs()];
            for (o, &go) in grad.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                for (gi, &w) in grad_in.iter_mut().zip(layer.weights.row(o)) {
                    *gi += go * w;
                }
            }
            if idx > 0 {
                for (gi, &z) in grad_in.iter_mut().zip(&cache.pre[idx - 1]) {
                    if z <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            grad = grad_in;
        }
        grad
    }

    /// Exact gradient of `objective` with respect to the input `x`.
    pub fn input_gradient(&self, x: &[f64], objective: Objective) -> Result<Vec<f64>> {
        Ok(self.objective_and_gradient(x, objective)?.1)
    }

    pub fn objective_and_gradient(&self, x: &[f64], objective: Objective) -> Result<(f64, Vec<f64>)> {
        let class = objective.class();
        if class >= self.num_outputs() {
            return Err(Error::InvalidClass {
                class,
                outputs: self.num_outputs(),
            });
        }
        self.check_input(x)?;
        let cache = self.forward_cached(x);
        let value = objective.evaluate(&cache.logits);
        let seed = match objective {
            Objective::Logit(c) => {
                let mut g = vec![0.0; self.num_outputs()];
                g[c] = 1.0;
                g
            }
            Objective::LogProb(c) => {
                let mut g: Vec<f64> = softmax(&cache.logits).into_iter().map(|p| -p).collect();
                g[c] += 1.0;
                g
            }
        };
        Ok((value, self.backward(&cache, seed, None)))
    }

    /// New model sharing every feature layer, with the logit layer replaced.
    pub fn replace_output_layer(&self, weights: Matrix, bias: Vec<f64>) -> Result<MlpClassifier> {
        if weights.cols() != self.feature_dim() {
            return Err(Error::shape(format!(
                "output weights have {} columns, feature dimension is {}",
                weights.cols(),
                self.feature_dim()
            )));
        }
        let head = Layer::new(weights, bias)?;
        let mut layers: Vec<Layer> = self.layers[..self.layers.len() - 1].to_vec();
        layers.push(head);
        MlpClassifier::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MlpClassifier> {
        MlpClassifier::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<MlpClassifier> {
        serde_json::from_str::<ModelFile>(text)?.into_model()
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: String,
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<&MlpClassifier> for ModelFile {
    fn from(m: &MlpClassifier) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: m.layer_dims(),
            activation: "relu".into(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<MlpClassifier> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format_version {}",
                self.format_version
            )));
        }
        if self.activation != "relu" {
            return Err(Error::Format(format!("unsupported activation {:?}", self.activation)));
        }
        let layers = self
            .layers
            .into_iter()
            .map(|l| Layer::new(Matrix::new(l.rows, l.cols, l.weights)?, l.bias))
            .collect::<Result<Vec<_>>>()?;
        let model = MlpClassifier::from_layers(layers)?;
        if model.layer_dims() != self.layer_dims {
            return Err(Error::Format(format!(
                "layer_dims {:?} disagree with layers {:?}",
                self.layer_dims,
                model.layer_dims()
            )));
        }
        Ok(model)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - log_sum).collect()
}

fn check_dataset(model: &MlpClassifier, ds: &Dataset) -> Result<()> {
    if ds.dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "dataset dimension {} vs model input {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    if ds.num_classes != model.num_outputs() {
        return Err(Error::shape(format!(
            "dataset has {} classes, model has {} outputs",
            ds.num_classes,
            model.num_outputs()
        )));
    }
    Ok(())
}

/// Minibatch SGD with momentum on mean softmax cross-entropy.
pub fn train(model: &MlpClassifier, ds: &Dataset, cfg: &TrainConfig) -> Result<MlpClassifier> {
    check_dataset(model, ds)?;
    cfg.validate()?;
    let mut model = model.clone();
    if ds.is_empty() {
        return Ok(model);
    }
    let zero_like = |m: &MlpClassifier| -> Vec<Layer> {
        m.layers
            .iter()
            .map(|l| Layer {
                weights: Matrix::zeros(l.outputs(), l.inputs()),
                bias: vec![0.0; l.outputs()],
            })
            .collect()
    };
    let mut velocity = zero_like(&model);
    let mut grads = zero_like(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut grads {
                g.weights.as_mut_slice().fill(0.0);
                g.bias.fill(0.0);
            }
            for &i in batch {
                let cache = model.forward_cached(ds.input(i));
                let mut delta = softmax(&cache.logits);
                delta[ds.labels[i]] -= 1.0;
                model.backward(&cache, delta, Some(&mut grads));
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for ((layer, vel), g) in model.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                let params = layer
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .chain(layer.bias.iter_mut());
                let vels = vel.weights.as_mut_slice().iter_mut().chain(vel.bias.iter_mut());
                let gs = g.weights.as_slice().iter().chain(&g.bias);
                for ((p, v), &gv) in params.zip(vels).zip(gs) {
                    *v = cfg.momentum * *v - scale * gv;
                    *p += *v;
                }
            }
        }
    }
    Ok(model)
}

/// Accuracy (argmax, lowest index on ties) and mean cross-entropy.
pub fn accuracy_and_loss(model: &MlpClassifier, ds: &Dataset) -> Result<(f64, f64)> {
    check_dataset(model, ds)?;
    if ds.is_empty() {
        return Err(Error::EmptyInput("accuracy_and_loss"));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..ds.len() {
        let logits = model.forward_cached(ds.input(i)).logits;
        if argmax(&logits) == ds.labels[i] {
            correct += 1;
        }
        loss -= log_softmax(&logits)[ds.labels[i]];
    }
    let n = ds.len() as f64;
    Ok((correct as f64 / n, loss / n))
}
