#![allow(dead_code)]

use actclust::nn::{Layer, Network};
use actclust::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random f64 network: 1–4 affine blocks of width ≤ 32, each followed by
/// ReLU, sphere projection or nothing, with at least one sphere projection.
pub fn random_network(seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=4usize);
    let sphere_at = rng.random_range(0..depth);
    let mut width = rng.random_range(2..=32usize);
    let mut layers = Vec::new();
    for block in 0..depth {
        let out = rng.random_range(2..=32usize);
        layers.push(Layer::affine(width, out));
        let pick = if block == sphere_at { 2 } else { rng.random_range(0..3) };
        match pick {
            0 => layers.push(Layer::Relu { dim: out }),
            1 => {}
            _ => layers.push(Layer::SphereProject {
                dim: out,
                radius: rng.random_range(0.5..8.0),
            }),
        }
        width = out;
    }
    let mut net = Network::new(layers, seed).unwrap();
    net.init_params(seed);
    // non-zero biases so every path is exercised
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            for v in p.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    net
}

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn mnist_dir() -> std::path::PathBuf {
    std::env::var_os("ACTCLUST_MNIST_DIR")
        .map(Into::into)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_available() -> bool {
    actclust::pipeline::MNIST_FILES.iter().all(|f| mnist_dir().join(f).is_file())
}

/// A cluster model with the given centroids and an untrained encoder; enough
/// for code that only reads centroids or soft-assigns embeddings.
pub fn model_with_centroids(centroids: Tensor<f32>, feature_dim: usize) -> actclust::dec::ClusterModel {
    use actclust::dec::{build_decoder, build_encoder, ClusterModel, DecConfig};
    let cfg = DecConfig {
        embedding_dim: centroids.cols(),
        n_clusters: centroids.rows(),
        hidden_dim: 8,
        ..DecConfig::default()
    };
    ClusterModel {
        layer_name: "layer1".into(),
        input_scale: 1.0,
        encoder: build_encoder(feature_dim, &cfg, 1).unwrap(),
        decoder: build_decoder(feature_dim, &cfg, 2).unwrap(),
        centroids,
        config: cfg,
        diagnostics: Default::default(),
    }
}

pub fn random_f32(rows: usize, cols: usize, scale: f32, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Exhaustive weighted scoring, independent of the library's distance code.
pub fn brute_force_ranking(query: &[Vec<f32>], train: &[Tensor<f32>], weights: &[f64]) -> Vec<(usize, f64)> {
    let total: f64 = weights.iter().sum();
    let n = train[0].rows();
    let mut scores: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..train.len() {
                let mut d = 0.0;
                for (a, b) in query[j].iter().zip(train[j].row(i)) {
                    d += (*a as f64 - *b as f64).powi(2);
                }
                s += weights[j] / total * d;
            }
            (i, s)
        })
        .collect();
    scores.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    scores
}

/// Minimum inertia over all 3^12 labelings of 12 points.
pub fn brute_force_inertia(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % 3;
            c /= 3;
        }
        let mut sum = [[0.0f64; 2]; 3];
        let mut count = [0usize; 3];
        for (p, &l) in points.iter().zip(&labels) {
            sum[l][0] += p[0];
            sum[l][1] += p[1];
            count[l] += 1;
        }
        let mut inertia = 0.0;
        for (p, &l) in points.iter().zip(&labels) {
            let m = [sum[l][0] / count[l] as f64, sum[l][1] / count[l] as f64];
            inertia += (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
        }
        best = best.min(inertia);
    }
    best
}

pub fn planted_twelve(seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [[0.0, 0.0], [6.0, 1.0], [2.0, 7.0]];
    (0..12)
        .map(|i| {
            let c = centers[i % 3];
            [c[0] + rng.random_range(-1.5..1.5), c[1] + rng.random_range(-1.5..1.5)]
        })
        .collect()
}
