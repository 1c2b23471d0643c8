//! Deep embedded clustering of one layer's activations.
//!
//! An autoencoder maps activations onto a sphere of radius `R` in a
//! `d`-dimensional embedding space. Centroids are seeded by k-means on the
//! pretrained embeddings, then the encoder and centroids are fine-tuned
//! together by minimizing `KL(P‖Q)`, where `Q` is the Student-t soft
//! assignment and `P` its sharpened self-training target.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::kmeans::kmeans_init;
use crate::nn::{hex, Layer, LayerSpec, Network, OptState, sgd_step};
use crate::store::{read_json, read_tensor_bundle, write_json, write_tensor_bundle, ActivationDump};
use crate::tensor::{argmax, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecConfig {
    pub embedding_dim: usize,
    pub n_clusters: usize,
    /// Degrees of freedom of the Student-t kernel.
    pub alpha: f64,
    /// Radius of the embedding hypersphere.
    pub radius: f64,
    pub hidden_dim: usize,
    pub ae_epochs: usize,
    pub dec_max_epochs: usize,
    /// Fine-tuning stops once fewer than this fraction of samples change
    /// hard cluster between consecutive epochs.
    pub assignment_change_tol: f64,
    pub kmeans_restarts: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Fine-tuning learning rate; `None` reuses `learning_rate`.
    pub dec_learning_rate: Option<f32>,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for DecConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 20,
            n_clusters: 15,
            alpha: 100.0,
            radius: 8.0,
            hidden_dim: 128,
            ae_epochs: 20,
            dec_max_epochs: 30,
            assignment_change_tol: 0.001,
            kmeans_restarts: 10,
            batch_size: 128,
            learning_rate: 0.05,
            dec_learning_rate: None,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl DecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.embedding_dim < 2 {
            return bad("embedding_dim must be at least 2");
        }
        if self.n_clusters < 2 {
            return bad("n_clusters must be at least 2");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(self.assignment_change_tol > 0.0 && self.assignment_change_tol < 1.0) {
            return bad("assignment_change_tol must lie in (0, 1)");
        }
        if self.hidden_dim == 0 || self.batch_size == 0 {
            return bad("hidden_dim and batch_size must be positive");
        }
        Ok(())
    }

    fn finetune_lr(&self) -> f32 {
        self.dec_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// Per-sample probability distribution over clusters, `p(z|x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment {
    pub q: Tensor<f64>,
}

impl SoftAssignment {
    pub fn n_samples(&self) -> usize {
        self.q.rows()
    }

    pub fn n_clusters(&self) -> usize {
        self.q.cols()
    }

    /// Most probable cluster per sample, lowest index on ties.
    pub fn hard(&self) -> Vec<usize> {
        self.q.iter_rows().map(argmax).collect()
    }
}

/// `q_ik ∝ (1 + ‖z_i − μ_k‖²/α)^(−(α+1)/2)`, normalized per row.
pub fn soft_assign(embeddings: &Tensor<f32>, centroids: &Tensor<f32>, alpha: f64) -> Result<SoftAssignment> {
    if embeddings.cols() != centroids.cols() {
        return Err(Error::Dimension(format!(
            "embeddings {:?} and centroids {:?} differ in width",
            embeddings.shape(),
            centroids.shape()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::Config("alpha must be positive".into()));
    }
    let (n, k) = (embeddings.rows(), centroids.rows());
    let mut q = Tensor::<f64>::zeros(&[n, k]);
    let power = -(alpha + 1.0) / 2.0;
    let mut logw = vec![0.0f64; k];
    for i in 0..n {
        let z = embeddings.row(i);
        for (c, lw) in logw.iter_mut().enumerate() {
            let d2 = crate::tensor::squared_distance(z, centroids.row(c));
            *lw = power * (d2 / alpha).ln_1p();
        }
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let row = q.row_mut(i);
        let mut sum = 0.0;
        for (dst, &lw) in row.iter_mut().zip(&logw) {
            *dst = (lw - max).exp();
            sum += *dst;
        }
        for dst in row.iter_mut() {
            *dst /= sum;
        }
    }
    Ok(SoftAssignment { q })
}

/// Self-training target `p_ik = (q_ik²/f_k) / Σ_k' (q_ik'²/f_k')` with
/// cluster frequencies `f_k = Σ_i q_ik`.
pub fn target_distribution(q: &SoftAssignment) -> Result<Tensor<f64>> {
    let (n, k) = (q.n_samples(), q.n_clusters());
    let mut freq = vec![0.0f64; k];
    for row in q.q.iter_rows() {
        for (f, &v) in freq.iter_mut().zip(row) {
            *f += v;
        }
    }
    if let Some(c) = freq.iter().position(|&f| !(f > 0.0)) {
        return Err(Error::Degenerate(format!(
            "cluster {c} has zero total assignment"
        )));
    }
    let mut p = Tensor::<f64>::zeros(&[n, k]);
    for i in 0..n {
        let src = q.q.row(i);
        let dst = p.row_mut(i);
        let mut sum = 0.0;
        for ((d, &v), &f) in dst.iter_mut().zip(src).zip(&freq) {
            *d = v * v / f;
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    Ok(p)
}

/// Mean over samples of `Σ_k p_ik ln(p_ik/q_ik)`; zero-probability target
/// entries contribute nothing.
pub fn kl_divergence(p: &Tensor<f64>, q: &Tensor<f64>) -> f64 {
    let n = p.rows().max(1);
    let total: f64 = p
        .data()
        .iter()
        .zip(q.data())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv / qv).ln())
        .sum();
    total / n as f64
}

/// Batch KL loss and its gradients with respect to the embeddings and the
/// centroids, holding the target `p` fixed.
///
/// With `d_ik = ‖z_i − μ_k‖²`:
/// `∂L/∂z_i = (α+1)/B · Σ_k (p_ik − q_ik)(z_i − μ_k)/(α + d_ik)` and
/// `∂L/∂μ_k = −(α+1)/B · Σ_i (p_ik − q_ik)(z_i − μ_k)/(α + d_ik)`.
pub fn kl_gradients(
    z: &Tensor<f32>,
    centroids: &Tensor<f32>,
    p: &Tensor<f64>,
    alpha: f64,
) -> Result<(f64, Tensor<f32>, Tensor<f32>)> {
    let q = soft_assign(z, centroids, alpha)?;
    if p.shape() != q.q.shape() {
        return Err(Error::Dimension(format!(
            "target {:?} vs assignment {:?}",
            p.shape(),
            q.q.shape()
        )));
    }
    let (b, d) = (z.rows(), z.cols());
    let k = centroids.rows();
    let scale = (alpha + 1.0) / b as f64;
    let mut gz = vec![0.0f64; b * d];
    let mut gmu = vec![0.0f64; k * d];
    for i in 0..b {
        let zi = z.row(i);
        for c in 0..k {
            let mu = centroids.row(c);
            let d2 = crate::tensor::squared_distance(zi, mu);
            let coef = scale * (p.row(i)[c] - q.q.row(i)[c]) / (alpha + d2);
            for j in 0..d {
                let diff = f64::from(zi[j]) - f64::from(mu[j]);
                gz[i * d + j] += coef * diff;
                gmu[c * d + j] -= coef * diff;
            }
        }
    }
    let loss = kl_divergence(p, &q.q);
    Ok((
        loss,
        Tensor::new(vec![b, d], gz.into_iter().map(|v| v as f32).collect())?,
        Tensor::new(vec![k, d], gmu.into_iter().map(|v| v as f32).collect())?,
    ))
}

/// Pretrained encoder/decoder pair.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    pub encoder: Network<f32>,
    pub decoder: Network<f32>,
    /// Multiplier applied to raw activations before encoding (inverse RMS of
    /// the training activations).
    pub input_scale: f32,
    /// Full-data reconstruction MSE: entry 0 before training, then one per
    /// epoch.
    pub loss_curve: Vec<f64>,
}

impl Autoencoder {
    pub fn encode(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        encode_with(&self.encoder, self.input_scale, x)
    }

    pub fn reconstruction_mse(&self, x: &Tensor<f32>) -> Result<f64> {
        let xs = scaled(x, self.input_scale);
        mse(&self.decoder.forward(&self.encoder.forward(&xs)?)?, &xs)
    }
}

fn scaled(x: &Tensor<f32>, s: f32) -> Tensor<f32> {
    x.map(|v| v * s)
}

fn encode_with(encoder: &Network<f32>, scale: f32, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    if x.shape().len() != 2 || x.cols() != encoder.in_dim() {
        return Err(Error::Dimension(format!(
            "encoder expects [batch×{}], got {:?}",
            encoder.in_dim(),
            x.shape()
        )));
    }
    encoder.forward(&scaled(x, scale))
}

fn mse(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(total / a.len().max(1) as f64)
}

fn rms(x: &Tensor<f32>) -> f64 {
    let ss: f64 = x.data().iter().map(|&v| f64::from(v) * f64::from(v)).sum();
    (ss / x.len().max(1) as f64).sqrt()
}

/// `feature → hidden → d` with ReLU, ending in the sphere projection.
pub fn build_encoder(feature_dim: usize, cfg: &DecConfig, seed: u64) -> Result<Network<f32>> {
    let mut net = Network::new(
        vec![
            Layer::affine(feature_dim, cfg.hidden_dim),
            Layer::Relu { dim: cfg.hidden_dim },
            Layer::affine(cfg.hidden_dim, cfg.embedding_dim),
            Layer::SphereProject {
                dim: cfg.embedding_dim,
                radius: cfg.radius as f32,
            },
        ],
        seed,
    )?;
    net.init_params(seed);
    Ok(net)
}

pub fn build_decoder(feature_dim: usize, cfg: &DecConfig, seed: u64) -> Result<Network<f32>> {
    Network::mlp(&[cfg.embedding_dim, cfg.hidden_dim, feature_dim], seed)
}

fn check_dump(dump: &ActivationDump, cfg: &DecConfig) -> Result<()> {
    cfg.validate()?;
    if dump.feature_dim < cfg.embedding_dim {
        return Err(Error::Config(format!(
            "layer {} has {} features, fewer than the embedding dimension {}",
            dump.layer_name, dump.feature_dim, cfg.embedding_dim
        )));
    }
    if dump.n_samples <= cfg.n_clusters {
        return Err(Error::Config(format!(
            "layer {} has {} samples; need more than {} clusters",
            dump.layer_name, dump.n_samples, cfg.n_clusters
        )));
    }
    Ok(())
}

/// Trains the autoencoder on mean squared reconstruction error.
pub fn pretrain_autoencoder(dump: &ActivationDump, cfg: &DecConfig) -> Result<Autoencoder> {
    check_dump(dump, cfg)?;
    let x = dump.to_tensor();
    let r = rms(&x);
    let input_scale = if r > 0.0 { (1.0 / r) as f32 } else { 1.0 };
    let xs = scaled(&x, input_scale);
    let f = dump.feature_dim;
    let mut encoder = build_encoder(f, cfg, derive_seed(cfg.seed, "dec/encoder"))?;
    let mut decoder = build_decoder(f, cfg, derive_seed(cfg.seed, "dec/decoder"))?;
    let mut enc_opt = encoder.optimizer(cfg.learning_rate, cfg.momentum)?;
    let mut dec_opt = decoder.optimizer(cfg.learning_rate, cfg.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dec/ae-shuffle"));
    let mut order: Vec<usize> = (0..x.rows()).collect();

    let initial = mse(&decoder.forward(&encoder.forward(&xs)?)?, &xs)?;
    let mut loss_curve = vec![initial];
    for epoch in 0..cfg.ae_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select_rows(chunk);
            let z = encoder.forward_train(&xb)?;
            let recon = decoder.forward_train(&z)?;
            let norm = 2.0 / recon.len() as f32;
            let mut grad = recon;
            for (g, &t) in grad.data_mut().iter_mut().zip(xb.data()) {
                *g = (*g - t) * norm;
            }
            let dgrads = decoder.backprop(&grad)?;
            let egrads = encoder.backprop(&dgrads.input)?;
            decoder.apply_gradients(&dgrads, &mut dec_opt)?;
            encoder.apply_gradients(&egrads, &mut enc_opt)?;
        }
        let loss = mse(&decoder.forward(&encoder.forward(&xs)?)?, &xs)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "autoencoder loss diverged at epoch {epoch} for {}",
                dump.layer_name
            )));
        }
        log::debug!("{} autoencoder epoch {epoch}: mse {loss:.6}", dump.layer_name);
        loss_curve.push(loss);
    }
    encoder.clear_cache();
    decoder.clear_cache();
    Ok(Autoencoder {
        encoder,
        decoder,
        input_scale,
        loss_curve,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ae_loss_curve: Vec<f64>,
    pub kmeans_inertia: f64,
    /// `KL(P‖Q)` at the start of every fine-tuning epoch, plus the value
    /// after the last one.
    pub kl_curve: Vec<f64>,
    /// Fraction of samples whose hard cluster changed in each epoch.
    pub assignment_change_curve: Vec<f64>,
    pub dec_epochs: usize,
    pub centroid_norms: Vec<f64>,
    /// Clusters with no hard-assigned training sample after fine-tuning.
    pub empty_clusters: Vec<usize>,
}

/// A trained per-layer clustering model.
#[derive(Clone, Debug)]
pub struct ClusterModel {
    pub layer_name: String,
    pub input_scale: f32,
    pub encoder: Network<f32>,
    pub decoder: Network<f32>,
    /// `[ℓ × d]`, unconstrained in the ambient embedding space.
    pub centroids: Tensor<f32>,
    pub config: DecConfig,
    pub diagnostics: Diagnostics,
}

/// Jointly fine-tunes the encoder and centroids on `KL(P‖Q)`.
pub fn dec_finetune(
    ae: Autoencoder,
    centroids: Tensor<f32>,
    dump: &ActivationDump,
    cfg: &DecConfig,
) -> Result<ClusterModel> {
    cfg.validate()?;
    let Autoencoder {
        mut encoder,
        decoder,
        input_scale,
        loss_curve,
    } = ae;
    if centroids.cols() != encoder.out_dim() {
        return Err(Error::Dimension(format!(
            "centroids {:?} do not live in the {}-dimensional embedding space",
            centroids.shape(),
            encoder.out_dim()
        )));
    }
    let x = dump.to_tensor();
    let xs = scaled(&x, input_scale);
    let mut centroids = centroids;
    let lr = cfg.finetune_lr();
    let mut enc_opt = encoder.optimizer(lr, cfg.momentum)?;
    let mut mu_opt = OptState::new(lr, cfg.momentum, &[&centroids])?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dec/finetune-shuffle"));
    let mut order: Vec<usize> = (0..x.rows()).collect();

    let mut diagnostics = Diagnostics {
        ae_loss_curve: loss_curve,
        ..Diagnostics::default()
    };
    let mut q = soft_assign(&encoder.forward(&xs)?, &centroids, cfg.alpha)?;
    let mut prev = q.hard();
    for epoch in 0..cfg.dec_max_epochs {
        let p = target_distribution(&q)?;
        diagnostics.kl_curve.push(kl_divergence(&p, &q.q));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select_rows(chunk);
            let pb = p.select_rows(chunk);
            let z = encoder.forward_train(&xb)?;
            let (loss, gz, gmu) = kl_gradients(&z, &centroids, &pb, cfg.alpha)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "KL loss diverged at epoch {epoch} for {}",
                    dump.layer_name
                )));
            }
            let egrads = encoder.backprop(&gz)?;
            encoder.apply_gradients(&egrads, &mut enc_opt)?;
            sgd_step(&mut [&mut centroids], &[gmu], &mut mu_opt)?;
        }
        if !centroids.all_finite() || !encoder.all_finite() {
            return Err(Error::Training(format!(
                "parameters diverged at epoch {epoch} for {}",
                dump.layer_name
            )));
        }
        q = soft_assign(&encoder.forward(&xs)?, &centroids, cfg.alpha)?;
        let hard = q.hard();
        let changed = hard.iter().zip(&prev).filter(|(a, b)| a != b).count();
        let frac = changed as f64 / hard.len().max(1) as f64;
        diagnostics.assignment_change_curve.push(frac);
        diagnostics.dec_epochs = epoch + 1;
        log::debug!(
            "{} DEC epoch {epoch}: KL {:.6}, changed {frac:.4}",
            dump.layer_name,
            diagnostics.kl_curve.last().copied().unwrap_or_default()
        );
        prev = hard;
        if frac < cfg.assignment_change_tol {
            break;
        }
    }
    encoder.clear_cache();
    if let Ok(p) = target_distribution(&q) {
        diagnostics.kl_curve.push(kl_divergence(&p, &q.q));
    }
    let mut counts = vec![0usize; centroids.rows()];
    for &h in &prev {
        counts[h] += 1;
    }
    diagnostics.empty_clusters = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(k, _)| k)
        .collect();
    if !diagnostics.empty_clusters.is_empty() {
        log::warn!(
            "{}: clusters {:?} have no hard-assigned samples",
            dump.layer_name,
            diagnostics.empty_clusters
        );
    }
    diagnostics.centroid_norms = centroids
        .iter_rows()
        .map(|r| r.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(ClusterModel {
        layer_name: dump.layer_name.clone(),
        input_scale,
        encoder,
        decoder,
        centroids,
        config: cfg.clone(),
        diagnostics,
    })
}

/// Pretraining, k-means seeding and fine-tuning in one call.
pub fn train_cluster_model(dump: &ActivationDump, cfg: &DecConfig) -> Result<ClusterModel> {
    let ae = pretrain_autoencoder(dump, cfg)?;
    let z = ae.encode(&dump.to_tensor())?;
    let fit = kmeans_init(&z, cfg.n_clusters, cfg.kmeans_restarts, derive_seed(cfg.seed, "dec/kmeans"))?;
    let mut model = dec_finetune(ae, fit.centroids, dump, cfg)?;
    model.diagnostics.kmeans_inertia = fit.inertia;
    Ok(model)
}

#[derive(Serialize, Deserialize)]
struct ClusterModelHeader {
    layer_name: String,
    input_scale: f32,
    config: DecConfig,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
    encoder_seed: u64,
    decoder_seed: u64,
    n_clusters: usize,
    embedding_dim: usize,
    params_file: String,
    checksum: String,
    diagnostics: Diagnostics,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn encode(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        encode_with(&self.encoder, self.input_scale, x)
    }

    pub fn soft_assign(&self, embeddings: &Tensor<f32>) -> Result<SoftAssignment> {
        soft_assign(embeddings, &self.centroids, self.config.alpha)
    }

    /// `p(z|x)` for raw activations.
    pub fn assign(&self, x: &Tensor<f32>) -> Result<SoftAssignment> {
        self.soft_assign(&self.encode(x)?)
    }

    /// SHA-256 over encoder, decoder, centroids and the input scale.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.layer_name.as_bytes());
        h.update(self.input_scale.to_le_bytes());
        h.update(self.encoder.checksum().as_bytes());
        h.update(self.decoder.checksum().as_bytes());
        for v in self.centroids.data() {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Writes `<stem>.json` (header and diagnostics) and `<stem>.bin`
    /// (parameter tensors as `ACTV` records) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let params_file = format!("{stem}.bin");
        let mut tensors = Vec::new();
        for (prefix, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, p) in net.params().into_iter().enumerate() {
                tensors.push((format!("{prefix}.{i}"), p.clone()));
            }
        }
        tensors.push(("centroids.0".to_string(), self.centroids.clone()));
        write_tensor_bundle(dir.join(&params_file), &tensors)?;
        let header = ClusterModelHeader {
            layer_name: self.layer_name.clone(),
            input_scale: self.input_scale,
            config: self.config.clone(),
            encoder: self.encoder.specs(),
            decoder: self.decoder.specs(),
            encoder_seed: self.encoder.seed(),
            decoder_seed: self.decoder.seed(),
            n_clusters: self.n_clusters(),
            embedding_dim: self.centroids.cols(),
            params_file,
            checksum: self.checksum(),
            diagnostics: self.diagnostics.clone(),
        };
        write_json(dir.join(format!("{stem}.json")), &header)
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let header: ClusterModelHeader = read_json(json_path)?;
        let dir = json_path.parent().unwrap_or(Path::new("."));
        let mut tensors = read_tensor_bundle(dir.join(&header.params_file))?.into_iter();
        let mut take = |prefix: &str, n: usize| -> Result<Vec<Tensor<f32>>> {
            (0..n)
                .map(|i| {
                    let expected = format!("{prefix}.{i}");
                    match tensors.next() {
                        Some((name, t)) if name == expected => Ok(t),
                        other => Err(Error::Format(crate::FormatError::Invalid(format!(
                            "expected tensor {expected}, found {:?}",
                            other.map(|o| o.0)
                        )))),
                    }
                })
                .collect()
        };
        let n_affine = |specs: &[LayerSpec]| {
            2 * specs
                .iter()
                .filter(|s| s.kind == crate::nn::LayerKind::Affine)
                .count()
        };
        let enc_params = take("encoder", n_affine(&header.encoder))?;
        let dec_params = take("decoder", n_affine(&header.decoder))?;
        let centroids = take("centroids", 1)?.pop().expect("one tensor");
        let encoder = Network::from_specs(&header.encoder, enc_params, header.encoder_seed)?;
        let decoder = Network::from_specs(&header.decoder, dec_params, header.decoder_seed)?;
        let model = ClusterModel {
            layer_name: header.layer_name,
            input_scale: header.input_scale,
            encoder,
            decoder,
            centroids,
            config: header.config,
            diagnostics: header.diagnostics,
        };
        if model.checksum() != header.checksum {
            return Err(Error::Format(crate::FormatError::Invalid(format!(
                "checksum mismatch for {}",
                json_path.display()
            ))));
        }
        Ok(model)
    }
}
