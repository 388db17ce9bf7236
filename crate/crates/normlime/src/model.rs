//! Feed-forward classifier with exact input gradients, plus the black-box
//! predictor abstraction the explanation code is written against.
//!
//! The network is deliberately plain: dense layers, ReLU hidden activations,
//! softmax output, mini-batch SGD on cross-entropy. Everything is seeded and
//! single-threaded per model, so a (config, data, seed) triple reproduces the
//! same weights bit for bit.

use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"NLKM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// What a predictor can do beyond returning class probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub probabilities: bool,
    pub gradients: bool,
    pub hidden_features: bool,
}

/// Black-box classifier interface. Perturbation-based explainers only need
/// `predict_proba`; gradient baselines and hidden-feature analyses query
/// `capabilities` first and fail cleanly when unsupported.
pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn capabilities(&self) -> Capabilities;

    /// Class probability vector for one instance; entries sum to 1.
    fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Array1<f64>>;

    /// Row-per-instance convenience wrapper; implementors with batched
    /// kernels should override.
    fn predict_proba_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((xs.nrows(), self.num_classes()));
        for (i, row) in xs.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.predict_proba(row)?);
        }
        Ok(out)
    }

    /// d/dx of the pre-softmax score of `class_index` at `x`.
    fn gradient_wrt_input(&self, x: ArrayView1<f64>, class_index: usize) -> Result<Array1<f64>> {
        let _ = (x, class_index);
        Err(Error::UnsupportedCapability("input gradients"))
    }

    /// Post-activation values of hidden layer `layer_index` (0 = first).
    fn hidden_features(&self, x: ArrayView1<f64>, layer_index: usize) -> Result<Array1<f64>> {
        let _ = (x, layer_index);
        Err(Error::UnsupportedCapability("hidden features"))
    }

    /// Index of the most probable class (lowest index wins ties).
    fn predicted_label(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(argmax(self.predict_proba(x)?.view()))
    }
}

/// First index attaining the maximum.
pub(crate) fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Zeroes a subset of one hidden layer's units during both the forward and
/// backward pass, simulating removal of those features from the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HiddenMask {
    /// Hidden layer the mask applies to (0 = first hidden layer).
    pub layer_index: usize,
    /// One flag per unit; `false` means the unit's activation is forced to 0.
    pub keep: Vec<bool>,
}

impl HiddenMask {
    pub fn validate(&self, model: &MlpModel) -> Result<()> {
        let hidden_layers = model.num_hidden_layers();
        if self.layer_index >= hidden_layers {
            return Err(Error::LayerOutOfRange {
                layer: self.layer_index,
                hidden_layers,
            });
        }
        let width = model.layer_sizes[self.layer_index + 1];
        if self.keep.len() != width {
            return Err(Error::ShapeMismatch {
                what: "hidden mask",
                expected: width,
                got: self.keep.len(),
            });
        }
        Ok(())
    }
}

/// Dense ReLU network with a softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    /// One matrix per weight layer, shaped (fan_out, fan_in).
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl MlpModel {
    /// Glorot-uniform initialization: W ~ U(-a, a) with a = sqrt(6/(fan_in+fan_out)),
    /// biases zero. Weights are drawn layer by layer in row-major order from a
    /// ChaCha8 stream, so a seed pins the full parameter vector.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), data).unwrap());
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// All-zero parameters; mostly useful in tests, where the uniform output
    /// distribution is a handy fixed point.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|p| Array2::zeros((p[1], p[0])))
            .collect();
        let biases = layer_sizes.windows(2).map(|p| Array1::zeros(p[1])).collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Assembles a model from explicit parameters, validating that the layer
    /// shapes chain together.
    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one weight layer".into()));
        }
        if weights.len() != biases.len() {
            return Err(Error::ShapeMismatch {
                what: "bias layers",
                expected: weights.len(),
                got: biases.len(),
            });
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *layer_sizes.last().unwrap() {
                return Err(Error::ShapeMismatch {
                    what: "weight fan-in",
                    expected: *layer_sizes.last().unwrap(),
                    got: w.ncols(),
                });
            }
            if w.nrows() != b.len() {
                return Err(Error::ShapeMismatch {
                    what: "bias length",
                    expected: w.nrows(),
                    got: b.len(),
                });
            }
            layer_sizes.push(w.nrows());
        }
        validate_layer_sizes(&layer_sizes)?;
        Ok(MlpModel {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Pre-softmax scores for one instance.
    pub fn logits(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        Ok(forward_single(&self.weights, &self.biases, x, None).1)
    }

    /// Like [`Predictor::predict_proba`] but with part of a hidden layer
    /// forced to zero.
    pub fn predict_proba_masked(
        &self,
        x: ArrayView1<f64>,
        mask: Option<&HiddenMask>,
    ) -> Result<Array1<f64>> {
        self.check_input(x)?;
        if let Some(m) = mask {
            m.validate(self)?;
        }
        let (_, mut logits) = forward_single(&self.weights, &self.biases, x, mask);
        softmax_inplace(logits.view_mut());
        Ok(logits)
    }

    pub fn predict_proba_batch_masked(
        &self,
        xs: ArrayView2<f64>,
        mask: Option<&HiddenMask>,
    ) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "input dimension",
                expected: self.input_dim(),
                got: xs.ncols(),
            });
        }
        if let Some(m) = mask {
            m.validate(self)?;
        }
        Ok(forward_batch_probs(&self.weights, &self.biases, xs, mask))
    }

    /// Treats the network from hidden layer `layer_index` upward as its own
    /// predictor whose input space is that layer's activations.
    pub fn head_from(&self, layer_index: usize) -> Result<HeadModel<'_>> {
        if layer_index >= self.num_hidden_layers() {
            return Err(Error::LayerOutOfRange {
                layer: layer_index,
                hidden_layers: self.num_hidden_layers(),
            });
        }
        Ok(HeadModel {
            model: self,
            start: layer_index + 1,
        })
    }

    fn check_input(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "input dimension",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// One SGD step on a mini-batch; returns the batch mean cross-entropy
    /// measured before the update.
    fn sgd_step(
        &mut self,
        xb: ArrayView2<f64>,
        yb: &[usize],
        lr: f64,
        l2: f64,
        mask: Option<&HiddenMask>,
    ) -> f64 {
        let nw = self.weights.len();
        let b = xb.nrows() as f64;

        // forward, keeping post-activation values for the backward pass
        let mut posts: Vec<Array2<f64>> = Vec::with_capacity(nw - 1);
        for l in 0..nw - 1 {
            let input = if l == 0 { xb } else { posts[l - 1].view() };
            let mut z = input.dot(&self.weights[l].t());
            z += &self.biases[l];
            z.mapv_inplace(|v| v.max(0.0));
            if let Some(m) = mask {
                if m.layer_index == l {
                    zero_masked_columns(&mut z, &m.keep);
                }
            }
            posts.push(z);
        }
        let last_input = if nw == 1 { xb } else { posts[nw - 2].view() };
        let mut logits = last_input.dot(&self.weights[nw - 1].t());
        logits += &self.biases[nw - 1];

        // softmax + cross-entropy, turning logits into probabilities in place
        let mut loss = 0.0;
        for (i, mut row) in logits.rows_mut().into_iter().enumerate() {
            softmax_inplace(row.view_mut());
            loss -= row[yb[i]].ln();
        }
        loss /= b;

        // dL/dlogits = (p - onehot(y)) / B
        let mut delta = logits;
        for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
            row[yb[i]] -= 1.0;
        }
        delta /= b;

        for l in (0..nw).rev() {
            let input = if l == 0 { xb } else { posts[l - 1].view() };
            let gw = delta.t().dot(&input);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                // propagate before updating weights[l]; ReLU gate keys off the
                // stored post-activations, so masked units stay silent here too
                let mut down = delta.dot(&self.weights[l]);
                Zip::from(&mut down).and(&posts[l - 1]).for_each(|d, &h| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = down;
            }
            self.weights[l].zip_mut_with(&gw, |w, &g| *w -= lr * (g + l2 * *w));
            self.biases[l].zip_mut_with(&gb, |bias, &g| *bias -= lr * g);
        }
        loss
    }
}

fn validate_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidConfig(
            "layer_sizes needs at least an input and an output layer".into(),
        ));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidConfig("layer sizes must be positive".into()));
    }
    Ok(())
}

fn zero_masked_columns(z: &mut Array2<f64>, keep: &[bool]) {
    for (u, &k) in keep.iter().enumerate() {
        if !k {
            z.column_mut(u).fill(0.0);
        }
    }
}

fn softmax_inplace(mut row: ndarray::ArrayViewMut1<f64>) {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    row.mapv_inplace(|v| (v - max).exp());
    let sum = row.sum();
    row.mapv_inplace(|v| v / sum);
}

/// Forward pass over a slice of weight layers. Returns the per-hidden-layer
/// post-activations and the logits.
fn forward_single(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    x: ArrayView1<f64>,
    mask: Option<&HiddenMask>,
) -> (Vec<Array1<f64>>, Array1<f64>) {
    let nw = weights.len();
    let mut posts: Vec<Array1<f64>> = Vec::with_capacity(nw - 1);
    for l in 0..nw - 1 {
        let input = if l == 0 { x } else { posts[l - 1].view() };
        let mut z = weights[l].dot(&input);
        z += &biases[l];
        z.mapv_inplace(|v| v.max(0.0));
        if let Some(m) = mask {
            if m.layer_index == l {
                for (u, &k) in m.keep.iter().enumerate() {
                    if !k {
                        z[u] = 0.0;
                    }
                }
            }
        }
        posts.push(z);
    }
    let last_input = if nw == 1 { x } else { posts[nw - 2].view() };
    let mut logits = weights[nw - 1].dot(&last_input);
    logits += &biases[nw - 1];
    (posts, logits)
}

/// d(logit of `class_index`)/dx through the slice of weight layers.
fn gradient_single(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    x: ArrayView1<f64>,
    class_index: usize,
    mask: Option<&HiddenMask>,
) -> Array1<f64> {
    let (posts, _) = forward_single(weights, biases, x, mask);
    let nw = weights.len();
    let num_classes = weights[nw - 1].nrows();
    let mut delta = Array1::zeros(num_classes);
    delta[class_index] = 1.0;
    for l in (0..nw).rev() {
        let mut down = weights[l].t().dot(&delta);
        if l == 0 {
            return down;
        }
        // ReLU gate: units at zero (including masked ones) pass no gradient
        Zip::from(&mut down).and(&posts[l - 1]).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        delta = down;
    }
    unreachable!("loop returns at l == 0")
}

fn forward_batch_probs(
    weights: &[Array2<f64>],
    biases: &[Array1<f64>],
    xs: ArrayView2<f64>,
    mask: Option<&HiddenMask>,
) -> Array2<f64> {
    let nw = weights.len();
    let mut a: Option<Array2<f64>> = None;
    for l in 0..nw {
        let input = match &a {
            None => xs,
            Some(prev) => prev.view(),
        };
        let mut z = input.dot(&weights[l].t());
        z += &biases[l];
        if l < nw - 1 {
            z.mapv_inplace(|v| v.max(0.0));
            if let Some(m) = mask {
                if m.layer_index == l {
                    zero_masked_columns(&mut z, &m.keep);
                }
            }
        }
        a = Some(z);
    }
    let mut logits = a.expect("at least one layer");
    for row in logits.rows_mut() {
        softmax_inplace(row);
    }
    logits
}

impl Predictor for MlpModel {
    fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            probabilities: true,
            gradients: true,
            hidden_features: self.num_hidden_layers() > 0,
        }
    }

    fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.predict_proba_masked(x, None)
    }

    fn predict_proba_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.predict_proba_batch_masked(xs, None)
    }

    fn gradient_wrt_input(&self, x: ArrayView1<f64>, class_index: usize) -> Result<Array1<f64>> {
        self.check_input(x)?;
        if class_index >= self.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "class index {class_index} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(gradient_single(&self.weights, &self.biases, x, class_index, None))
    }

    fn hidden_features(&self, x: ArrayView1<f64>, layer_index: usize) -> Result<Array1<f64>> {
        self.check_input(x)?;
        if layer_index >= self.num_hidden_layers() {
            return Err(Error::LayerOutOfRange {
                layer: layer_index,
                hidden_layers: self.num_hidden_layers(),
            });
        }
        let (mut posts, _) = forward_single(&self.weights, &self.biases, x, None);
        Ok(posts.swap_remove(layer_index))
    }
}

/// The tail of an [`MlpModel`]: everything above one hidden layer, viewed as a
/// predictor over that layer's activation space.
#[derive(Clone, Copy, Debug)]
pub struct HeadModel<'a> {
    model: &'a MlpModel,
    /// Index of the first weight layer included in the head.
    start: usize,
}

impl Predictor for HeadModel<'_> {
    fn input_dim(&self) -> usize {
        self.model.layer_sizes[self.start]
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            probabilities: true,
            gradients: true,
            hidden_features: false,
        }
    }

    fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "head input dimension",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let (_, mut logits) = forward_single(
            &self.model.weights[self.start..],
            &self.model.biases[self.start..],
            x,
            None,
        );
        softmax_inplace(logits.view_mut());
        Ok(logits)
    }

    fn predict_proba_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "head input dimension",
                expected: self.input_dim(),
                got: xs.ncols(),
            });
        }
        Ok(forward_batch_probs(
            &self.model.weights[self.start..],
            &self.model.biases[self.start..],
            xs,
            None,
        ))
    }

    fn gradient_wrt_input(&self, x: ArrayView1<f64>, class_index: usize) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "head input dimension",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if class_index >= self.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "class index {class_index} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(gradient_single(
            &self.model.weights[self.start..],
            &self.model.biases[self.start..],
            x,
            class_index,
            None,
        ))
    }
}

/// Mini-batch SGD hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 weight decay coefficient (biases are not decayed).
    pub l2_penalty: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // The decay is deliberately strong: probability-target surrogates
        // need soft predictions to see any local signal, and dead input
        // features should carry weights near zero so they cannot leak
        // initialization noise into saliency maps. On the bundled digit
        // data this setup reaches ~95.5% test accuracy.
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.3,
            l2_penalty: 5e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !self.l2_penalty.is_finite() || self.l2_penalty < 0.0 {
            return Err(Error::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

/// Trains a copy of `model` on `data`. The input model supplies the
/// architecture and initial weights and is left untouched.
pub fn train(model: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<MlpModel> {
    train_masked(model, data, cfg, None)
}

/// [`train`] with an optional hidden mask applied during every forward and
/// backward pass, so the surviving units learn to compensate. With
/// `epochs = 0` the initial weights come back unchanged.
pub fn train_masked(
    model: &MlpModel,
    data: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&HiddenMask>,
) -> Result<MlpModel> {
    cfg.validate()?;
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "training data dimension",
            expected: model.input_dim(),
            got: data.dim(),
        });
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= model.num_classes()) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {} model classes",
            model.num_classes()
        )));
    }
    if let Some(m) = mask {
        m.validate(model)?;
    }

    let mut trained = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.n()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = data.instances.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let loss = trained.sgd_step(xb.view(), &yb, cfg.learning_rate, cfg.l2_penalty, mask);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
    }
    Ok(trained)
}

/// Mean cross-entropy of the (optionally masked) model over a dataset.
pub fn cross_entropy_loss(
    model: &MlpModel,
    data: &Dataset,
    mask: Option<&HiddenMask>,
) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let probs = model.predict_proba_batch_masked(data.instances.view(), mask)?;
    let mut loss = 0.0;
    for (i, &y) in data.labels.iter().enumerate() {
        loss -= probs[[i, y]].ln();
    }
    Ok(loss / data.n() as f64)
}

/// Fraction of instances whose argmax prediction disagrees with the label.
pub fn classification_error(model: &dyn Predictor, data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let probs = model.predict_proba_batch(data.instances.view())?;
    Ok(error_from_probs(&probs, &data.labels))
}

/// [`classification_error`] under a hidden mask.
pub fn classification_error_masked(
    model: &MlpModel,
    data: &Dataset,
    mask: Option<&HiddenMask>,
) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let probs = model.predict_proba_batch_masked(data.instances.view(), mask)?;
    Ok(error_from_probs(&probs, &data.labels))
}

fn error_from_probs(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let wrong = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.view()) != y)
        .count();
    wrong as f64 / labels.len() as f64
}

/// Serializes a model: magic, format version, layer count, layer dims, then
/// per layer the row-major weight matrix and bias vector as little-endian f64.
pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.layer_sizes.len() as u32).to_le_bytes())?;
    for &dim in &model.layer_sizes {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for (weights, biases) in model.weights.iter().zip(&model.biases) {
        for &v in weights.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in biases.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a model written by [`save_model`]. Round-trips are bit-exact.
pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path)?;
    let mut off = 0usize;

    let magic = take(&bytes, &mut off, 4)?;
    if magic != MODEL_MAGIC {
        return Err(Error::MalformedModel(format!(
            "bad magic {:02x?} (expected {:02x?})",
            magic, MODEL_MAGIC
        )));
    }
    let version = read_le_u32(&bytes, &mut off)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let layer_count = read_le_u32(&bytes, &mut off)? as usize;
    if layer_count < 2 {
        return Err(Error::MalformedModel(format!(
            "layer count {layer_count} is too small"
        )));
    }
    let mut layer_sizes = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let dim = read_le_u32(&bytes, &mut off)? as usize;
        if dim == 0 {
            return Err(Error::MalformedModel("zero layer dimension".into()));
        }
        layer_sizes.push(dim);
    }

    let mut weights = Vec::with_capacity(layer_count - 1);
    let mut biases = Vec::with_capacity(layer_count - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let count = fan_in
            .checked_mul(fan_out)
            .ok_or_else(|| Error::MalformedModel("layer dimensions overflow".into()))?;
        let w = read_le_f64s(&bytes, &mut off, count)?;
        let b = read_le_f64s(&bytes, &mut off, fan_out)?;
        weights.push(Array2::from_shape_vec((fan_out, fan_in), w).unwrap());
        biases.push(Array1::from_vec(b));
    }
    if off != bytes.len() {
        return Err(Error::MalformedModel(format!(
            "{} unexpected trailing bytes",
            bytes.len() - off
        )));
    }
    Ok(MlpModel {
        layer_sizes,
        weights,
        biases,
    })
}

fn take<'a>(bytes: &'a [u8], off: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = off.checked_add(n).ok_or_else(|| {
        Error::MalformedModel("declared sizes overflow the address space".into())
    })?;
    if bytes.len() < end {
        return Err(Error::MalformedModel(format!(
            "truncated at byte {} (wanted {end} bytes)",
            bytes.len()
        )));
    }
    let out = &bytes[*off..end];
    *off = end;
    Ok(out)
}

fn read_le_u32(bytes: &[u8], off: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, off, 4)?.try_into().unwrap()))
}

fn read_le_f64s(bytes: &[u8], off: &mut usize, count: usize) -> Result<Vec<f64>> {
    let n = count
        .checked_mul(8)
        .ok_or_else(|| Error::MalformedModel("declared sizes overflow the address space".into()))?;
    let raw = take(bytes, off, n)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
