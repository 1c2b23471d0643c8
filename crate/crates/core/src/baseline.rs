//! The black-box classifier being explained: a ReLU multilayer perceptron
//! trained with minibatch momentum SGD on softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, softmax_xent, Layer, LayerKind, Network};
use crate::store::{ActivationDump, LabelArray};
use crate::tensor::{argmax, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Input width, hidden widths, class count.
    pub layer_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub seed: u64,
    /// Tap points: 0 is the input, `j ≥ 1` the output of the j-th affine
    /// block (after its ReLU when it has one, the logits for the last).
    pub selected_layers: Vec<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![784, 256, 64, 10],
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
            selected_layers: vec![0, 1, 2],
        }
    }
}

impl BaselineConfig {
    pub fn n_blocks(&self) -> usize {
        self.layer_dims.len().saturating_sub(1)
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "invalid layer_dims {:?}",
                self.layer_dims
            )));
        }
        if self.layer_dims.last() != Some(&n_classes) {
            return Err(Error::Config(format!(
                "last layer width {:?} must equal the class count {n_classes}",
                self.layer_dims.last()
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(&bad) = self.selected_layers.iter().find(|&&j| j > self.n_blocks()) {
            return Err(Error::Index(format!(
                "selected layer {bad} exceeds the {} layers of the network",
                self.n_blocks()
            )));
        }
        Ok(())
    }
}

/// Name under which tap `j` is dumped.
pub fn layer_name(j: usize) -> String {
    format!("layer{j}")
}

#[derive(Clone, Debug)]
pub struct TrainedBaseline {
    pub network: Network<f32>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub checksum: String,
    /// Mean minibatch loss per epoch.
    pub loss_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub loss_curve: Vec<f64>,
    pub checksum: String,
    pub config: BaselineConfig,
}

impl TrainedBaseline {
    pub fn report(&self, config: &BaselineConfig) -> TrainingReport {
        TrainingReport {
            train_accuracy: self.train_accuracy,
            test_accuracy: self.test_accuracy,
            loss_curve: self.loss_curve.clone(),
            checksum: self.checksum.clone(),
            config: config.clone(),
        }
    }
}

pub fn train_baseline(
    cfg: &BaselineConfig,
    train_x: &Tensor<f32>,
    train_y: &LabelArray,
    test: Option<(&Tensor<f32>, &LabelArray)>,
) -> Result<TrainedBaseline> {
    cfg.validate(train_y.n_classes())?;
    if train_x.rows() != train_y.len() {
        return Err(Error::Alignment(format!(
            "{} training samples but {} labels",
            train_x.rows(),
            train_y.len()
        )));
    }
    if train_x.cols() != cfg.layer_dims[0] {
        return Err(Error::Dimension(format!(
            "input width {} does not match layer_dims[0] = {}",
            train_x.cols(),
            cfg.layer_dims[0]
        )));
    }
    let mut net = Network::mlp(&cfg.layer_dims, derive_seed(cfg.seed, "baseline/init"))?;
    let mut opt = net.optimizer(cfg.learning_rate, cfg.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "baseline/shuffle"));
    let n = train_x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train_x.select_rows(chunk);
            let yb: Vec<u32> = chunk.iter().map(|&i| train_y.labels()[i]).collect();
            let logits = net.forward_train(&xb)?;
            let (loss, grad) = softmax_xent(&logits, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
            }
            let grads = net.backprop(&grad)?;
            net.apply_gradients(&grads, &mut opt)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches.max(1) as f64;
        if !mean.is_finite() || !net.all_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
        log::debug!("baseline epoch {epoch}: loss {mean:.5}");
        loss_curve.push(mean);
    }
    net.clear_cache();

    let train_accuracy = accuracy(&predict_class(&net, train_x)?, train_y.labels());
    let test_accuracy = match test {
        Some((tx, ty)) => accuracy(&predict_class(&net, tx)?, ty.labels()),
        None => f64::NAN,
    };
    let checksum = net.checksum();
    Ok(TrainedBaseline {
        network: net,
        train_accuracy,
        test_accuracy,
        checksum,
        loss_curve,
    })
}

fn check_input(net: &Network<f32>, x: &Tensor<f32>) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != net.in_dim() {
        return Err(Error::Dimension(format!(
            "model expects [batch×{}], got {:?}",
            net.in_dim(),
            x.shape()
        )));
    }
    Ok(())
}

/// Class posteriors `f(x)`; every row sums to 1.
pub fn predict_proba(net: &Network<f32>, x: &Tensor<f32>) -> Result<Tensor<f64>> {
    check_input(net, x)?;
    Ok(softmax_rows(&net.forward(x)?))
}

/// Row-wise argmax of the logits, lowest index on ties.
pub fn predict_class(net: &Network<f32>, x: &Tensor<f32>) -> Result<Vec<u32>> {
    check_input(net, x)?;
    let logits = net.forward(x)?;
    Ok(logits.iter_rows().map(|r| argmax(r) as u32).collect())
}

pub fn accuracy(pred: &[u32], truth: &[u32]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / pred.len() as f64
}

/// Index into `net.layers()` after which tap `j` is read, for `j ≥ 1`.
fn tap_position(net: &Network<f32>, j: usize) -> Result<usize> {
    let layers = net.layers();
    let mut block = 0;
    for (i, layer) in layers.iter().enumerate() {
        if layer.kind() == LayerKind::Affine {
            block += 1;
            if block == j {
                let next_is_relu = matches!(layers.get(i + 1), Some(Layer::Relu { .. }));
                return Ok(if next_is_relu { i + 1 } else { i });
            }
        }
    }
    Err(Error::Index(format!(
        "layer {j} does not exist; the network has {block} layers"
    )))
}

/// Activations at the selected tap points, sample order preserved.
pub fn extract_activations(
    net: &Network<f32>,
    x: &Tensor<f32>,
    selected_layers: &[usize],
) -> Result<Vec<ActivationDump>> {
    check_input(net, x)?;
    let positions = selected_layers
        .iter()
        .map(|&j| if j == 0 { Ok(None) } else { tap_position(net, j).map(Some) })
        .collect::<Result<Vec<_>>>()?;
    let outs = net.forward_all(x)?;
    selected_layers
        .iter()
        .zip(positions)
        .map(|(&j, pos)| {
            let t = match pos {
                None => x,
                Some(p) => &outs[p],
            };
            ActivationDump::new(layer_name(j), t)
        })
        .collect()
}

/// Runs the layers after tap `j` on activations taken at that tap, returning
/// class posteriors.
pub fn replay_from_layer(net: &Network<f32>, j: usize, activations: &Tensor<f32>) -> Result<Tensor<f64>> {
    let start = if j == 0 { 0 } else { tap_position(net, j)? + 1 };
    let mut h = activations.clone();
    for layer in &net.layers()[start..] {
        h = layer.forward(&h)?;
    }
    Ok(softmax_rows(&h))
}
