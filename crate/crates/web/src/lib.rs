//! In-browser demo: trains a small classifier on synthetic blobs, distills it
//! into per-layer cluster surrogates and exposes three interactive queries.
//!
//! [`Demo`] is the plain Rust session (tested natively); [`DemoSession`] is
//! the thin wasm-bindgen wrapper the page talks to.

use actclust::baseline::{extract_activations, predict_class, train_baseline, BaselineConfig};
use actclust::dec::{soft_assign, train_cluster_model, DecConfig};
use actclust::explain::{embed_layers, rank_similar};
use actclust::store::{make_blobs_with_centers, LabelArray};
use actclust::surrogate::{evaluate_predictions, fit_posterior, FullSurrogate, LayerSurrogate, DEFAULT_EPSILON};
use actclust::{Result, Tensor};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const CLASSES: usize = 4;
const TRAIN_PER_CLASS: usize = 80;
const TEST_PER_CLASS: usize = 20;
const DIM: usize = 12;

struct Split {
    x: Tensor<f32>,
    labels: LabelArray,
    baseline_pred: Vec<u32>,
    activations: Vec<Tensor<f32>>,
    embeddings: Vec<Tensor<f32>>,
}

pub struct Demo {
    surrogate: FullSurrogate,
    train: Split,
    test: Split,
    baseline_test_accuracy: f64,
}

fn split(net: &actclust::nn::Network<f32>, x: Tensor<f32>, labels: Vec<u32>, taps: &[usize]) -> Result<Split> {
    let activations = extract_activations(net, &x, taps)?.iter().map(|d| d.to_tensor()).collect();
    Ok(Split {
        baseline_pred: predict_class(net, &x)?,
        labels: LabelArray::new(labels, CLASSES)?,
        x,
        activations,
        embeddings: Vec::new(),
    })
}

impl Demo {
    pub fn new(seed: u64) -> Result<Self> {
        let per = TRAIN_PER_CLASS + TEST_PER_CLASS;
        let (x, labels, _) = make_blobs_with_centers(CLASSES, per, DIM, 5.0, seed)?;
        let (mut tr, mut te) = (Vec::new(), Vec::new());
        for i in 0..x.rows() {
            if i % per < TRAIN_PER_CLASS { tr.push(i) } else { te.push(i) }
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| labels.labels()[i]).collect::<Vec<_>>();

        let cfg = BaselineConfig {
            layer_dims: vec![DIM, 16, 12, CLASSES],
            epochs: 15,
            batch_size: 32,
            seed,
            ..BaselineConfig::default()
        };
        let (train_x, test_x) = (x.select_rows(&tr), x.select_rows(&te));
        let train_y = LabelArray::new(pick(&tr), CLASSES)?;
        let test_y = LabelArray::new(pick(&te), CLASSES)?;
        let trained = train_baseline(&cfg, &train_x, &train_y, Some((&test_x, &test_y)))?;
        let net = &trained.network;
        let mut train = split(net, train_x, pick(&tr), &cfg.selected_layers)?;
        let mut test = split(net, test_x, pick(&te), &cfg.selected_layers)?;

        let dec = DecConfig {
            embedding_dim: 6,
            n_clusters: 4,
            hidden_dim: 24,
            ae_epochs: 20,
            dec_max_epochs: 20,
            batch_size: 32,
            seed,
            ..DecConfig::default()
        };
        let dumps = extract_activations(net, &train.x, &cfg.selected_layers)?;
        let mut layers = Vec::new();
        for dump in &dumps {
            let model = train_cluster_model(dump, &dec)?;
            let q = model.soft_assign(&model.encode(&dump.to_tensor())?)?;
            let posterior = fit_posterior(&q, &train.labels, DEFAULT_EPSILON)?;
            layers.push(LayerSurrogate::new(model, posterior)?);
        }
        let surrogate = FullSurrogate::new(layers, &vec![1.0; dumps.len()])?;
        let models: Vec<_> = surrogate.layers().iter().map(|l| &l.cluster_model).collect();
        train.embeddings = embed_layers(&models, &train.activations)?;
        test.embeddings = embed_layers(&models, &test.activations)?;
        Ok(Self {
            surrogate,
            train,
            test,
            baseline_test_accuracy: trained.test_accuracy,
        })
    }

    pub fn summary(&self) -> Value {
        json!({
            "layers": self.surrogate.layers().iter().map(|l| l.layer_name()).collect::<Vec<_>>(),
            "clusters": self.surrogate.layers().iter().map(|l| l.cluster_model.n_clusters()).collect::<Vec<_>>(),
            "alpha": self.surrogate.layers()[0].cluster_model.config.alpha,
            "n_train": self.train.labels.len(),
            "n_test": self.test.labels.len(),
            "baseline_test_accuracy": self.baseline_test_accuracy,
        })
    }

    /// Test-set accuracy and fidelity of the surrogate under `weights`.
    pub fn evaluate(&self, weights: &[f64]) -> Result<Value> {
        let pred = self.surrogate.predict_with(&self.test.activations, weights)?;
        let report = evaluate_predictions(&pred, &self.test.labels, &self.test.baseline_pred, weights)?;
        Ok(json!({
            "accuracy": report.accuracy,
            "fidelity": report.fidelity,
            "confusion": report.confusion,
            "weights": report.weights,
        }))
    }

    /// The `k` training samples nearest to test sample `query` under the
    /// layer-weighted embedding distance.
    pub fn similar(&self, query: usize, weights: &[f64], k: usize) -> Result<Value> {
        let q = self.test_row(query)?;
        let result = rank_similar(query, &q, &self.train.embeddings, weights, k)?;
        let labels = self.train.labels.labels();
        Ok(json!({
            "query_label": self.test.labels.labels()[query],
            "baseline_prediction": self.test.baseline_pred[query],
            "neighbors": result.neighbors.iter().map(|n| json!({
                "index": n.train_index,
                "label": labels[n.train_index],
                "score": n.combined_score,
                "layer_sq_distances": n.layer_sq_distances,
            })).collect::<Vec<_>>(),
        }))
    }

    /// Soft cluster assignment of test sample `query` at `layer`, recomputed
    /// with kernel degrees of freedom `alpha`.
    pub fn soft_assignment(&self, query: usize, layer: usize, alpha: f64) -> Result<Value> {
        let surrogate = self.surrogate.layers().get(layer).ok_or_else(|| {
            actclust::Error::Index(format!("layer {layer} out of range"))
        })?;
        self.test_row(query)?;
        let z = self.test.embeddings[layer].select_rows(&[query]);
        let q = soft_assign(&z, &surrogate.cluster_model.centroids, alpha)?;
        let pred = surrogate.predict_from_assignment(&q)?;
        Ok(json!({
            "layer": surrogate.layer_name(),
            "q": q.q.row(0),
            "class_probabilities": pred.row(0),
        }))
    }

    fn test_row(&self, query: usize) -> Result<Vec<&[f32]>> {
        if query >= self.test.labels.len() {
            return Err(actclust::Error::Index(format!(
                "query {query} out of range; {} test samples",
                self.test.labels.len()
            )));
        }
        Ok(self.test.embeddings.iter().map(|t| t.row(query)).collect())
    }
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

fn to_string(v: Value) -> String {
    v.to_string()
}

#[wasm_bindgen]
pub struct DemoSession(Demo);

#[wasm_bindgen]
impl DemoSession {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> std::result::Result<DemoSession, JsError> {
        js(Demo::new(u64::from(seed))).map(DemoSession)
    }

    pub fn summary(&self) -> String {
        to_string(self.0.summary())
    }

    pub fn evaluate(&self, weights: &[f64]) -> std::result::Result<String, JsError> {
        js(self.0.evaluate(weights)).map(to_string)
    }

    pub fn similar(&self, query: usize, weights: &[f64], k: usize) -> std::result::Result<String, JsError> {
        js(self.0.similar(query, weights, k)).map(to_string)
    }

    pub fn soft_assignment(&self, query: usize, layer: usize, alpha: f64) -> std::result::Result<String, JsError> {
        js(self.0.soft_assignment(query, layer, alpha)).map(to_string)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn demo() -> &'static Demo {
        static DEMO: OnceLock<Demo> = OnceLock::new();
        DEMO.get_or_init(|| Demo::new(7).unwrap())
    }

    #[test]
    fn session_trains_a_faithful_surrogate() {
        let s = demo().summary();
        assert_eq!(s["n_test"], 80);
        assert!(s["baseline_test_accuracy"].as_f64().unwrap() > 0.95);
        let eval = demo().evaluate(&[1.0, 1.0, 1.0]).unwrap();
        assert!(eval["fidelity"].as_f64().unwrap() > 0.9);
    }

    #[test]
    fn similar_returns_k_sorted_neighbors() {
        let r = demo().similar(3, &[0.0, 0.0, 1.0], 5).unwrap();
        let scores: Vec<f64> = r["neighbors"].as_array().unwrap().iter().map(|n| n["score"].as_f64().unwrap()).collect();
        assert_eq!(scores.len(), 5);
        assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lower_alpha_flattens_the_assignment() {
        let peak = |alpha| {
            let r = demo().soft_assignment(0, 2, alpha).unwrap();
            let q: Vec<f64> = serde_json::from_value(r["q"].clone()).unwrap();
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            q.into_iter().fold(0.0, f64::max)
        };
        assert!(peak(0.01) <= peak(100.0));
    }

    #[test]
    fn bad_indices_are_errors() {
        assert!(demo().similar(10_000, &[1.0, 1.0, 1.0], 3).is_err());
        assert!(demo().soft_assignment(0, 9, 1.0).is_err());
        assert!(demo().evaluate(&[0.0, 0.0, 0.0]).is_err());
    }
}
