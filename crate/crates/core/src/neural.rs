//! Fixed-depth feed-forward regressor: three fully connected ReLU layers and
//! a linear output layer, trained with mini-batch Adam on mean squared error.
//!
//! Samples are stored column-wise (`input_dim x batch`), so a mini-batch
//! forward pass is one matrix product per layer.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

pub const HIDDEN_LAYERS: usize = 3;
pub const DEFAULT_HIDDEN: [usize; HIDDEN_LAYERS] = [64, 64, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_widths: [usize; HIDDEN_LAYERS],
    pub output_dim: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_widths: DEFAULT_HIDDEN,
            output_dim,
            seed,
        }
    }

    pub fn with_hidden(mut self, hidden_widths: [usize; HIDDEN_LAYERS]) -> Self {
        self.hidden_widths = hidden_widths;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig("network input and output dims must be positive".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> [usize; HIDDEN_LAYERS + 2] {
        let [h1, h2, h3] = self.hidden_widths;
        [self.input_dim, h1, h2, h3, self.output_dim]
    }

    pub fn parameter_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Layer {
            weights: DMatrix::zeros(out, inp),
            bias: DVector::zeros(out),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Parameter-shaped container used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    fn zeros_like(config: &MlpConfig) -> Self {
        Gradient {
            layers: config.widths().windows(2).map(|w| Layer::zeros(w[1], w[0])).collect(),
        }
    }

    /// Flattened in [`Mlp::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        for r in 0..l.weights.nrows() {
            out.extend(l.weights.row(r).iter());
        }
        out.extend(l.bias.iter());
    }
    out
}

/// Held-out `(inputs, targets)`.
pub type Samples<'a> = (&'a [Vec<f64>], &'a [Vec<f64>]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_losses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Gradient,
    v: Gradient,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(config: &MlpConfig, lr: f64) -> Self {
        Adam {
            m: Gradient::zeros_like(config),
            v: Gradient::zeros_like(config),
            step: 0,
            lr,
        }
    }

    fn apply(&mut self, layers: &mut [Layer], grad: &Gradient) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let lr = self.lr;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (((p, g), m), v) in layers
            .iter_mut()
            .zip(&grad.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            for (((p, g), m), v) in p
                .weights
                .iter_mut()
                .zip(g.weights.iter())
                .zip(m.weights.iter_mut())
                .zip(v.weights.iter_mut())
            {
                update(p, *g, m, v);
            }
            for (((p, g), m), v) in p
                .bias
                .iter_mut()
                .zip(g.bias.iter())
                .zip(m.bias.iter_mut())
                .zip(v.bias.iter_mut())
            {
                update(p, *g, m, v);
            }
        }
    }
}

/// Column-major sample matrix built from row vectors.
fn columns_of(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::dims(dim, bad.len()));
    }
    Ok(DMatrix::from_fn(dim, rows.len(), |r, c| rows[c][r]))
}

fn gather_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    layers: Vec<Layer>,
}

impl Mlp {
    /// He-style uniform initialization, `U(-b, b)` with `b = sqrt(6 / fan_in)`;
    /// biases start at zero.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .widths()
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let bound = (6.0 / inp as f64).sqrt();
                let mut layer = Layer::zeros(out, inp);
                // Fill row-major so the draw order matches the serialized layout.
                for r in 0..out {
                    for c in 0..inp {
                        layer.weights[(r, c)] = rng.random_range(-bound..bound);
                    }
                }
                layer
            })
            .collect();
        Ok(Mlp { config, layers })
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = Gradient::zeros_like(&config).layers;
        Ok(Mlp { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Replaces layer `index` (0 = first hidden layer, 3 = output layer).
    pub fn set_layer(&mut self, index: usize, weights: DMatrix<f64>, bias: DVector<f64>) -> Result<()> {
        let w = self.config.widths();
        if index > HIDDEN_LAYERS {
            return Err(Error::InvalidConfig(format!("layer index {index} out of range")));
        }
        let (out, inp) = (w[index + 1], w[index]);
        if weights.shape() != (out, inp) {
            return Err(Error::dims(out * inp, weights.len()));
        }
        if bias.len() != out {
            return Err(Error::dims(out, bias.len()));
        }
        self.layers[index] = Layer { weights, bias };
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.config.parameter_count()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn parameters(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::dims(self.parameter_count(), params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    l.weights[(r, c)] = it.next().unwrap_or_default();
                }
            }
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap_or_default());
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.input_dim {
            return Err(Error::dims(self.config.input_dim, x.len()));
        }
        let mut h = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * &h + &l.bias;
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            h = z;
        }
        Ok(h.as_slice().to_vec())
    }

    /// Pre-activations and activations for a batch (`input_dim x B`).
    /// Returns `(pre_activations, activations)` where `activations[0]` is the input.
    fn forward_cached(&self, x: DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len() + 1);
        act.push(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * act.last().expect("input present");
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            let h = if i < last { z.map(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
            act.push(h);
        }
        (pre, act)
    }

    /// MSE (mean over batch and outputs) and its gradient for one batch.
    fn batch_gradient(&self, x: DMatrix<f64>, t: &DMatrix<f64>) -> (f64, Gradient) {
        let (pre, act) = self.forward_cached(x);
        let y = act.last().expect("output present");
        let diff = y - t;
        let count = diff.len() as f64;
        let loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);
        let mut layers = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let dw = &delta * act[i].transpose();
            let db = delta.column_sum();
            if i > 0 {
                let mut dh = self.layers[i].weights.transpose() * &delta;
                dh.zip_apply(&pre[i - 1], |g, z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = dh;
            }
            layers.push(Layer { weights: dw, bias: db });
        }
        layers.reverse();
        (loss, Gradient { layers })
    }

    /// Gradient of `mean_j (f(x)_j - target_j)^2` with respect to every parameter.
    pub fn gradient(&self, x: &[f64], target: &[f64]) -> Result<Gradient> {
        if x.len() != self.config.input_dim {
            return Err(Error::dims(self.config.input_dim, x.len()));
        }
        if target.len() != self.config.output_dim {
            return Err(Error::dims(self.config.output_dim, target.len()));
        }
        let xm = DMatrix::from_column_slice(x.len(), 1, x);
        let tm = DMatrix::from_column_slice(target.len(), 1, target);
        Ok(self.batch_gradient(xm, &tm).1)
    }

    pub fn loss(&self, x: &[f64], target: &[f64]) -> Result<f64> {
        let y = self.forward(x)?;
        if target.len() != y.len() {
            return Err(Error::dims(y.len(), target.len()));
        }
        Ok(y.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
    }

    /// Mean squared error over a whole data set.
    pub fn mse(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        if inputs.len() != targets.len() {
            return Err(Error::dims(inputs.len(), targets.len()));
        }
        let x = columns_of(inputs, self.config.input_dim)?;
        let t = columns_of(targets, self.config.output_dim)?;
        let (_, act) = self.forward_cached(x);
        let diff = act.last().expect("output present") - t;
        Ok(diff.norm_squared() / diff.len() as f64)
    }

    pub fn train(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        opts: &TrainOptions,
    ) -> Result<TrainReport> {
        self.train_with_validation(inputs, targets, None, opts)
    }

    /// Mini-batch Adam. The reported epoch loss is the mean of the batch
    /// losses seen during that epoch. On a non-finite loss or parameter the
    /// network keeps its last finite state and an error is returned.
    pub fn train_with_validation(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        validation: Option<Samples<'_>>,
        opts: &TrainOptions,
    ) -> Result<TrainReport> {
        if opts.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if opts.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(opts.learning_rate > 0.0 && opts.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != targets.len() {
            return Err(Error::dims(inputs.len(), targets.len()));
        }
        let x = columns_of(inputs, self.config.input_dim)?;
        let t = columns_of(targets, self.config.output_dim)?;
        let val = match validation {
            Some((vi, vt)) => {
                if vi.len() != vt.len() {
                    return Err(Error::dims(vi.len(), vt.len()));
                }
                Some((vi, vt))
            }
            None => None,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut adam = Adam::new(&self.config, opts.learning_rate);
        let mut epoch_losses = Vec::with_capacity(opts.epochs);
        let mut validation_losses = val.map(|_| Vec::with_capacity(opts.epochs));

        for epoch in 0..opts.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(opts.batch_size) {
                let (loss, grad) =
                    self.batch_gradient(gather_columns(&x, chunk), &gather_columns(&t, chunk));
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
                }
                let snapshot = self.layers.clone();
                adam.apply(&mut self.layers, &grad);
                if !self.layers.iter().all(Layer::is_finite) {
                    self.layers = snapshot;
                    return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
                }
                total += loss;
                batches += 1;
            }
            epoch_losses.push(total / batches as f64);
            if let (Some((vi, vt)), Some(out)) = (val, validation_losses.as_mut()) {
                out.push(self.mse(vi, vt)?);
            }
        }
        let final_loss = *epoch_losses.last().expect("epochs >= 1");
        Ok(TrainReport {
            epoch_losses,
            final_loss,
            validation_losses,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: MlpFile = fsio::read_json(path)?;
        file.into_mlp()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_json(path, &MlpFile::from_mlp(self))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    /// Row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpFile {
    config: MlpConfig,
    layers: Vec<LayerFile>,
}

impl MlpFile {
    fn from_mlp(net: &Mlp) -> Self {
        MlpFile {
            config: net.config.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.transpose().as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    fn into_mlp(self) -> Result<Mlp> {
        let mut net = Mlp::zeros(self.config)?;
        if self.layers.len() != HIDDEN_LAYERS + 1 {
            return Err(Error::dims(HIDDEN_LAYERS + 1, self.layers.len()));
        }
        for (i, l) in self.layers.into_iter().enumerate() {
            if l.weights.len() != l.rows * l.cols {
                return Err(Error::dims(l.rows * l.cols, l.weights.len()));
            }
            let w = DMatrix::from_row_slice(l.rows, l.cols, &l.weights);
            net.set_layer(i, w, DVector::from_vec(l.bias))?;
        }
        if !net.layers.iter().all(Layer::is_finite) {
            return Err(Error::InvalidConfig("network file contains non-finite parameters".into()));
        }
        Ok(net)
    }
}
