//! Minimal multilayer network: affine, ReLU and hypersphere-projection
//! layers with exact reverse-mode gradients and momentum SGD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Affine,
    Relu,
    SphereProject,
}

/// One stage of a [`Network`]. Affine weights are stored `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T: Scalar = f32> {
    Affine { weight: Tensor<T>, bias: Tensor<T> },
    Relu { dim: usize },
    SphereProject { dim: usize, radius: T },
}

/// Parameter-free description of a layer, used for persistence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl<T: Scalar> Layer<T> {
    pub fn affine(in_dim: usize, out_dim: usize) -> Self {
        Layer::Affine {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Affine { .. } => LayerKind::Affine,
            Layer::Relu { .. } => LayerKind::Relu,
            Layer::SphereProject { .. } => LayerKind::SphereProject,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Affine { weight, .. } => weight.cols(),
            Layer::Relu { dim } | Layer::SphereProject { dim, .. } => *dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Affine { weight, .. } => weight.rows(),
            Layer::Relu { dim } | Layer::SphereProject { dim, .. } => *dim,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: self.kind(),
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            radius: match self {
                Layer::SphereProject { radius, .. } => Some(radius.to_f64_lossy()),
                _ => None,
            },
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Affine { weight, bias } => affine_forward(x, weight, bias),
            Layer::Relu { dim } => {
                check_width(x, *dim, "relu")?;
                Ok(relu_forward(x))
            }
            Layer::SphereProject { dim, radius } => {
                check_width(x, *dim, "sphere-project")?;
                sphere_project(x, *radius)
            }
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Affine { weight, bias } => Layer::Affine {
                weight: weight.cast(),
                bias: bias.cast(),
            },
            Layer::Relu { dim } => Layer::Relu { dim: *dim },
            Layer::SphereProject { dim, radius } => Layer::SphereProject {
                dim: *dim,
                radius: U::from_f64_lossy(radius.to_f64_lossy()),
            },
        }
    }
}

fn check_width<T: Scalar>(x: &Tensor<T>, dim: usize, what: &str) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != dim {
        return Err(Error::Dimension(format!(
            "{what} expects [batch×{dim}], got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// `y[i] = W·x[i] + b` for every row of `x`.
pub fn affine_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    if x.shape().len() != 2
        || weight.shape().len() != 2
        || x.cols() != weight.cols()
        || bias.len() != weight.rows()
    {
        return Err(Error::Dimension(format!(
            "affine input {:?} incompatible with weight {:?} / bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut y = x.matmul_nt(weight)?;
    let b = bias.data();
    for row in y.data_mut().chunks_mut(b.len()) {
        for (v, &bj) in row.iter_mut().zip(b) {
            *v = *v + bj;
        }
    }
    Ok(y)
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Scales every row of `u` onto the sphere of the given radius.
pub fn sphere_project<T: Scalar>(u: &Tensor<T>, radius: T) -> Result<Tensor<T>> {
    let mut out = u.clone();
    let r = radius.to_f64_lossy();
    for i in 0..u.rows() {
        let row = out.row_mut(i);
        let norm = row_norm(row);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Degenerate(format!(
                "row {i} has norm {norm}; cannot project onto the sphere"
            )));
        }
        let scale = r / norm;
        for v in row.iter_mut() {
            *v = T::from_f64_lossy(v.to_f64_lossy() * scale);
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of [`sphere_project`]:
/// `R (g/‖u‖ − u (u·g)/‖u‖³)` per row.
pub fn sphere_project_backward<T: Scalar>(
    u: &Tensor<T>,
    radius: T,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if u.shape() != grad_out.shape() {
        return Err(Error::Dimension(format!(
            "sphere-project gradient {:?} does not match input {:?}",
            grad_out.shape(),
            u.shape()
        )));
    }
    let r = radius.to_f64_lossy();
    let mut out = Tensor::zeros(u.shape());
    for i in 0..u.rows() {
        let ui = u.row(i);
        let gi = grad_out.row(i);
        let norm = row_norm(ui);
        if norm == 0.0 {
            return Err(Error::Degenerate(format!("row {i} has zero norm")));
        }
        let dot: f64 = ui
            .iter()
            .zip(gi)
            .map(|(&a, &b)| a.to_f64_lossy() * b.to_f64_lossy())
            .sum();
        let n3 = norm * norm * norm;
        for ((o, &a), &g) in out.row_mut(i).iter_mut().zip(ui).zip(gi) {
            let v = r * (g.to_f64_lossy() / norm - a.to_f64_lossy() * dot / n3);
            *o = T::from_f64_lossy(v);
        }
    }
    Ok(out)
}

fn row_norm<T: Scalar>(row: &[T]) -> f64 {
    row.iter()
        .map(|v| {
            let f = v.to_f64_lossy();
            f * f
        })
        .sum::<f64>()
        .sqrt()
}

/// Row-wise softmax, evaluated in f64 with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<f64> {
    let mut out = Tensor::<f64>::zeros(&[logits.rows(), logits.cols()]);
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row
            .iter()
            .map(|v| v.to_f64_lossy())
            .fold(f64::NEG_INFINITY, f64::max);
        let o = out.row_mut(i);
        let mut sum = 0.0;
        for (dst, v) in o.iter_mut().zip(row) {
            *dst = (v.to_f64_lossy() - max).exp();
            sum += *dst;
        }
        for dst in o.iter_mut() {
            *dst /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `(softmax − onehot)/batch`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[u32]) -> Result<(f64, Tensor<T>)> {
    let (batch, classes) = (logits.rows(), logits.cols());
    if labels.len() != batch {
        return Err(Error::Dimension(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some((i, &y)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y as usize >= classes)
    {
        return Err(Error::Index(format!(
            "label {y} at sample {i} is outside [0, {classes})"
        )));
    }
    let mut grad = Tensor::zeros(&[batch, classes]);
    let mut total = 0.0f64;
    let inv_batch = 1.0 / batch as f64;
    #[allow(clippy::needless_range_loop)]
    for i in 0..batch {
        let row = logits.row(i);
        let max = row
            .iter()
            .map(|v| v.to_f64_lossy())
            .fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v.to_f64_lossy() - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        let y = labels[i] as usize;
        total += log_z - row[y].to_f64_lossy();
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[c].to_f64_lossy() - log_z).exp();
            let onehot = if c == y { 1.0 } else { 0.0 };
            *g = T::from_f64_lossy((p - onehot) * inv_batch);
        }
    }
    Ok((total * inv_batch, grad))
}

/// Gradients produced by [`Network::backprop`], parameters in
/// [`Network::params`] order.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar = f32> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

/// A chain of layers plus the seed its parameters were drawn from.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar = f32> {
    layers: Vec<Layer<T>>,
    seed: u64,
    cache: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.seed == other.seed
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} emits {} features but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for layer in &layers {
            if let Layer::Affine { weight, bias } = layer {
                if bias.len() != weight.rows() {
                    return Err(Error::Dimension(format!(
                        "bias {:?} does not match weight {:?}",
                        bias.shape(),
                        weight.shape()
                    )));
                }
            }
            if let Layer::SphereProject { radius, .. } = layer {
                if !(*radius > T::zero()) {
                    return Err(Error::Config("sphere radius must be positive".into()));
                }
            }
        }
        Ok(Self {
            layers,
            seed,
            cache: None,
        })
    }

    /// Affine layers of the given widths with ReLU between them (none after
    /// the last), Glorot-initialized from `seed`.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {dims:?}")));
        }
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            layers.push(Layer::affine(w[0], w[1]));
            if i + 2 < dims.len() {
                layers.push(Layer::Relu { dim: w[1] });
            }
        }
        let mut net = Self::new(layers, seed)?;
        net.init_params(seed);
        Ok(net)
    }

    /// Rebuilds a network from persisted layer specs and parameter tensors
    /// (weight then bias for every affine layer).
    pub fn from_specs(specs: &[LayerSpec], params: Vec<Tensor<T>>, seed: u64) -> Result<Self> {
        let mut params = params.into_iter();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = match spec.kind {
                LayerKind::Affine => {
                    let (Some(weight), Some(bias)) = (params.next(), params.next()) else {
                        return Err(Error::Dimension("missing affine parameters".into()));
                    };
                    if weight.shape() != [spec.out_dim, spec.in_dim] || bias.len() != spec.out_dim
                    {
                        return Err(Error::Dimension(format!(
                            "affine {}→{} got weight {:?}, bias {:?}",
                            spec.in_dim,
                            spec.out_dim,
                            weight.shape(),
                            bias.shape()
                        )));
                    }
                    let bias = bias.reshape(vec![spec.out_dim])?;
                    Layer::Affine { weight, bias }
                }
                LayerKind::Relu => Layer::Relu { dim: spec.in_dim },
                LayerKind::SphereProject => Layer::SphereProject {
                    dim: spec.in_dim,
                    radius: T::from_f64_lossy(spec.radius.ok_or_else(|| {
                        Error::Config("sphere-project layer without radius".into())
                    })?),
                },
            };
            if layer.kind() != LayerKind::Affine && spec.in_dim != spec.out_dim {
                return Err(Error::Dimension(format!(
                    "{:?} layer must preserve width, got {}→{}",
                    spec.kind, spec.in_dim, spec.out_dim
                )));
            }
            layers.push(layer);
        }
        if params.next().is_some() {
            return Err(Error::Dimension("unused parameter tensors".into()));
        }
        Self::new(layers, seed)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Glorot-uniform weights in `±sqrt(6/(in+out))`, zero biases.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            if let Layer::Affine { weight, bias } = layer {
                let limit = (6.0 / (weight.cols() + weight.rows()) as f64).sqrt();
                for w in weight.data_mut() {
                    *w = T::from_f64_lossy(rng.random_range(-limit..limit));
                }
                bias.data_mut().fill(T::zero());
            }
        }
        self.seed = seed;
        self.cache = None;
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Affine { weight, bias } = layer {
                out.push(weight);
                out.push(bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Affine { weight, bias } = layer {
                out.push(weight);
                out.push(bias);
            }
        }
        out
    }

    /// Pure forward pass; safe to share across threads.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Output of every layer, in order (last entry is the network output).
    pub fn forward_all(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = outs.last().unwrap_or(x);
            let y = layer.forward(input)?;
            outs.push(y);
        }
        Ok(outs)
    }

    /// Forward pass that records layer inputs for a following [`backprop`].
    ///
    /// [`backprop`]: Network::backprop
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let y = layer.forward(&h)?;
            inputs.push(h);
            h = y;
        }
        self.cache = Some(inputs);
        Ok(h)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Reverse-mode gradients of `Σ upstream ⊙ output` for the most recent
    /// [`forward_train`](Network::forward_train) batch.
    pub fn backprop(&self, upstream: &Tensor<T>) -> Result<Gradients<T>> {
        let inputs = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backprop called without a cached forward pass".into()))?;
        let batch = inputs[0].rows();
        if upstream.shape() != [batch, self.out_dim()] {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match output [{batch}, {}]",
                upstream.shape(),
                self.out_dim()
            )));
        }
        let mut grads_rev: Vec<Tensor<T>> = Vec::new();
        let mut g = upstream.clone();
        for (layer, input) in self.layers.iter().zip(inputs).rev() {
            g = match layer {
                Layer::Affine { weight, .. } => {
                    let dw = g.matmul_tn(input)?;
                    let mut db = Tensor::zeros(&[weight.rows()]);
                    for row in g.iter_rows() {
                        for (acc, &v) in db.data_mut().iter_mut().zip(row) {
                            *acc = *acc + v;
                        }
                    }
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    g.matmul(weight)?
                }
                Layer::Relu { .. } => {
                    let mut out = g;
                    for (v, &x) in out.data_mut().iter_mut().zip(input.data()) {
                        if x <= T::zero() {
                            *v = T::zero();
                        }
                    }
                    out
                }
                Layer::SphereProject { radius, .. } => {
                    sphere_project_backward(input, *radius, &g)?
                }
            };
        }
        grads_rev.reverse();
        Ok(Gradients {
            params: grads_rev,
            input: g,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(Layer::cast).collect(),
            seed: self.seed,
            cache: None,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.all_finite())
    }

    /// SHA-256 over layer specs and the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for layer in &self.layers {
            let spec = layer.spec();
            hasher.update(format!("{:?}:{}:{}:{:?};", spec.kind, spec.in_dim, spec.out_dim, spec.radius));
        }
        for p in self.params() {
            for v in p.data() {
                hasher.update(v.to_f64_lossy().to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Momentum SGD state: one velocity buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct OptState<T: Scalar = f32> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> OptState<T> {
    pub fn new(learning_rate: T, momentum: T, params: &[&Tensor<T>]) -> Result<Self> {
        if !(learning_rate > T::zero()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if momentum < T::zero() || momentum >= T::one() {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        })
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }
}

/// `v ← momentum·v − lr·g; p ← p + v` for every parameter.
pub fn sgd_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    opt: &mut OptState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.velocity.len() {
        return Err(Error::Dimension(format!(
            "{} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            opt.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(opt.velocity.iter_mut()) {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::Dimension(format!(
                "parameter {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = opt.momentum * *vv - opt.learning_rate * gv;
            *pv = *pv + *vv;
        }
    }
    Ok(())
}

impl<T: Scalar> Network<T> {
    pub fn optimizer(&self, learning_rate: T, momentum: T) -> Result<OptState<T>> {
        OptState::new(learning_rate, momentum, &self.params())
    }

    pub fn apply_gradients(&mut self, grads: &Gradients<T>, opt: &mut OptState<T>) -> Result<()> {
        let mut params = self.params_mut();
        sgd_step(&mut params, &grads.params, opt)
    }
}
