//! Cluster-to-label surrogates: each layer predicts `p(y|x) = Σ_k p(y|z_k) p(z_k|x)`
//! and the full surrogate is a weighted average over layers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dec::{ClusterModel, SoftAssignment};
use crate::error::{Error, Result};
use crate::store::{read_json, write_json, LabelArray};
use crate::tensor::{argmax, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `P[k][c] = p(y = c | z = z_k)`, estimated from soft counts.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalPosterior {
    pub matrix: Tensor<f64>,
    pub epsilon: f64,
}

impl EmpiricalPosterior {
    pub fn n_clusters(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.matrix.cols()
    }
}

/// `P[k][c] = (ε + Σ_{i: y_i = c} q_ik) / (n_classes·ε + Σ_i q_ik)`.
pub fn fit_posterior(q: &SoftAssignment, labels: &LabelArray, epsilon: f64) -> Result<EmpiricalPosterior> {
    if q.n_samples() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} assignments for {} labels",
            q.n_samples(),
            labels.len()
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("smoothing must be finite and non-negative, got {epsilon}")));
    }
    let (k, c) = (q.n_clusters(), labels.n_classes());
    let mut counts = vec![0.0f64; k * c];
    for (row, &y) in q.q.iter_rows().zip(labels.labels()) {
        for (cluster, &v) in row.iter().enumerate() {
            counts[cluster * c + y as usize] += v;
        }
    }
    for cluster in 0..k {
        let row = &mut counts[cluster * c..(cluster + 1) * c];
        let mass: f64 = row.iter().sum();
        let denom = c as f64 * epsilon + mass;
        if !(denom > 0.0) {
            return Err(Error::Degenerate(format!(
                "cluster {cluster} has no assignment mass and smoothing is zero"
            )));
        }
        for v in row.iter_mut() {
            *v = (*v + epsilon) / denom;
        }
    }
    Ok(EmpiricalPosterior {
        matrix: Tensor::new(vec![k, c], counts)?,
        epsilon,
    })
}

/// One layer's cluster model together with its cluster-to-label map.
#[derive(Clone, Debug)]
pub struct LayerSurrogate {
    pub cluster_model: ClusterModel,
    pub posterior: EmpiricalPosterior,
}

impl LayerSurrogate {
    pub fn new(cluster_model: ClusterModel, posterior: EmpiricalPosterior) -> Result<Self> {
        if posterior.n_clusters() != cluster_model.n_clusters() {
            return Err(Error::Dimension(format!(
                "posterior has {} rows but {} has {} clusters",
                posterior.n_clusters(),
                cluster_model.layer_name,
                cluster_model.n_clusters()
            )));
        }
        Ok(Self {
            cluster_model,
            posterior,
        })
    }

    pub fn layer_name(&self) -> &str {
        &self.cluster_model.layer_name
    }

    /// `q · P`.
    pub fn predict_from_assignment(&self, q: &SoftAssignment) -> Result<Tensor<f64>> {
        q.q.matmul(&self.posterior.matrix)
    }

    pub fn predict(&self, activations: &Tensor<f32>) -> Result<Tensor<f64>> {
        self.predict_from_assignment(&self.cluster_model.assign(activations)?)
    }
}

/// Scales non-negative weights to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Config(format!("layer weights must be finite and non-negative, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("at least one layer weight must be positive".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// `Σ_j ŵ_j · preds_j`, accumulated from zero in layer order. Zero-weight
/// layers are skipped, so a one-hot weight vector reproduces its layer's
/// prediction bit for bit.
pub fn combine_predictions(preds: &[Tensor<f64>], weights: &[f64]) -> Result<Tensor<f64>> {
    if preds.len() != weights.len() || preds.is_empty() {
        return Err(Error::Config(format!(
            "{} weights for {} layer predictions",
            weights.len(),
            preds.len()
        )));
    }
    let w = normalize_weights(weights)?;
    let shape = preds[0].shape().to_vec();
    let mut out = Tensor::<f64>::zeros(&shape);
    for (p, &wj) in preds.iter().zip(&w) {
        if p.shape() != shape.as_slice() {
            return Err(Error::Dimension(format!("{:?} vs {:?}", p.shape(), shape)));
        }
        if wj == 0.0 {
            continue;
        }
        for (o, &v) in out.data_mut().iter_mut().zip(p.data()) {
            *o += wj * v;
        }
    }
    Ok(out)
}

/// Weighted average of layer surrogates. Weights are stored normalized.
#[derive(Clone, Debug)]
pub struct FullSurrogate {
    layers: Vec<LayerSurrogate>,
    weights: Vec<f64>,
}

impl FullSurrogate {
    pub fn new(layers: Vec<LayerSurrogate>, weights: &[f64]) -> Result<Self> {
        if layers.is_empty() || layers.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} weights for {} layers",
                weights.len(),
                layers.len()
            )));
        }
        let n_classes = layers[0].posterior.n_classes();
        if layers.iter().any(|l| l.posterior.n_classes() != n_classes) {
            return Err(Error::Dimension("layer posteriors disagree on class count".into()));
        }
        Ok(Self {
            weights: normalize_weights(weights)?,
            layers,
        })
    }

    pub fn layers(&self) -> &[LayerSurrogate] {
        &self.layers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_classes(&self) -> usize {
        self.layers[0].posterior.n_classes()
    }

    pub fn layer_predictions(&self, activations: &[Tensor<f32>]) -> Result<Vec<Tensor<f64>>> {
        if activations.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} activation blocks for {} layers",
                activations.len(),
                self.layers.len()
            )));
        }
        self.layers.iter().zip(activations).map(|(l, a)| l.predict(a)).collect()
    }

    pub fn predict(&self, activations: &[Tensor<f32>]) -> Result<Tensor<f64>> {
        self.predict_with(activations, &self.weights)
    }

    /// Prediction under alternative layer weights, leaving `self` untouched.
    pub fn predict_with(&self, activations: &[Tensor<f32>], weights: &[f64]) -> Result<Tensor<f64>> {
        combine_predictions(&self.layer_predictions(activations)?, weights)
    }

    pub fn evaluate(
        &self,
        activations: &[Tensor<f32>],
        labels: &LabelArray,
        baseline_pred: &[u32],
    ) -> Result<EvalReport> {
        evaluate_predictions(&self.predict(activations)?, labels, baseline_pred, &self.weights)
    }

    /// Writes `surrogate.json`; `cluster_refs[j]` is the path of layer j's
    /// cluster model header relative to the file's directory.
    pub fn save(&self, path: &Path, cluster_refs: &[String]) -> Result<()> {
        if cluster_refs.len() != self.layers.len() {
            return Err(Error::Config("one cluster reference per layer required".into()));
        }
        let file = SurrogateFile {
            n_classes: self.n_classes(),
            weights: self.weights.clone(),
            layers: self
                .layers
                .iter()
                .zip(cluster_refs)
                .map(|(l, r)| SurrogateLayerFile {
                    layer_name: l.layer_name().to_string(),
                    cluster_model: r.clone(),
                    cluster_checksum: l.cluster_model.checksum(),
                    epsilon: l.posterior.epsilon,
                    posterior: l.posterior.matrix.iter_rows().map(<[f64]>::to_vec).collect(),
                })
                .collect(),
        };
        write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: SurrogateFile = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut layers = Vec::with_capacity(file.layers.len());
        for l in file.layers {
            let model = ClusterModel::load(&dir.join(&l.cluster_model))?;
            if model.checksum() != l.cluster_checksum {
                return Err(Error::Format(crate::FormatError::Invalid(format!(
                    "{} changed since the surrogate was built",
                    l.cluster_model
                ))));
            }
            let rows = l.posterior.len();
            let matrix = Tensor::new(vec![rows, file.n_classes], l.posterior.concat())?;
            layers.push(LayerSurrogate::new(
                model,
                EmpiricalPosterior {
                    matrix,
                    epsilon: l.epsilon,
                },
            )?);
        }
        Self::new(layers, &file.weights)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurrogateFile {
    n_classes: usize,
    weights: Vec<f64>,
    layers: Vec<SurrogateLayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurrogateLayerFile {
    layer_name: String,
    cluster_model: String,
    cluster_checksum: String,
    epsilon: f64,
    posterior: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub fidelity: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub weights: Vec<f64>,
}

/// Accuracy against labels and fidelity against the baseline's classes.
pub fn evaluate_predictions(
    pred: &Tensor<f64>,
    labels: &LabelArray,
    baseline_pred: &[u32],
    weights: &[f64],
) -> Result<EvalReport> {
    let n = pred.rows();
    if labels.len() != n || baseline_pred.len() != n {
        return Err(Error::Alignment(format!(
            "{n} predictions, {} labels, {} baseline predictions",
            labels.len(),
            baseline_pred.len()
        )));
    }
    let c = labels.n_classes().max(pred.cols());
    let mut confusion = vec![vec![0u64; c]; c];
    let (mut correct, mut agree) = (0usize, 0usize);
    for ((row, &y), &b) in pred.iter_rows().zip(labels.labels()).zip(baseline_pred) {
        let p = argmax(row);
        correct += usize::from(p == y as usize);
        agree += usize::from(p == b as usize);
        confusion[y as usize][p] += 1;
    }
    let denom = n.max(1) as f64;
    Ok(EvalReport {
        accuracy: correct as f64 / denom,
        fidelity: agree as f64 / denom,
        confusion,
        weights: weights.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(rows: usize, cols: usize, data: &[f64]) -> SoftAssignment {
        SoftAssignment {
            q: Tensor::new(vec![rows, cols], data.to_vec()).unwrap(),
        }
    }

    fn labels(v: &[u32], n: usize) -> LabelArray {
        LabelArray::new(v.to_vec(), n).unwrap()
    }

    #[test]
    fn pure_cluster_maps_to_its_label() {
        let a = q(3, 2, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let p = fit_posterior(&a, &labels(&[2, 2, 2], 3), 1e-6).unwrap();
        assert!((p.matrix.row(1)[2] - 1.0).abs() < 1e-5);
        for row in p.matrix.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_assignment_and_labels_give_uniform_rows() {
        let a = q(4, 3, &[1.0 / 3.0; 12]);
        let p = fit_posterior(&a, &labels(&[0, 1, 0, 1], 2), 1e-6).unwrap();
        assert!(p.matrix.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn posterior_hand_computation() {
        let a = q(4, 2, &[0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 1.0, 0.0]);
        let eps = 0.01;
        let p = fit_posterior(&a, &labels(&[0, 1, 1, 0], 2), eps).unwrap();
        // cluster 0: class 0 mass 0.9 + 1.0, class 1 mass 0.2 + 0.5, total 2.6
        assert!((p.matrix.row(0)[0] - (0.01 + 1.9) / (0.02 + 2.6)).abs() < 1e-12);
        assert!((p.matrix.row(0)[1] - (0.01 + 0.7) / (0.02 + 2.6)).abs() < 1e-12);
        // cluster 1: class 0 mass 0.1, class 1 mass 1.3, total 1.4
        assert!((p.matrix.row(1)[0] - (0.01 + 0.1) / (0.02 + 1.4)).abs() < 1e-12);
        assert!((p.matrix.row(1)[1] - (0.01 + 1.3) / (0.02 + 1.4)).abs() < 1e-12);
    }

    #[test]
    fn starved_cluster_without_smoothing_is_degenerate() {
        let a = q(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        match fit_posterior(&a, &labels(&[0, 1], 2), 0.0) {
            Err(Error::Degenerate(m)) => assert!(m.contains("cluster 1")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            fit_posterior(&a, &labels(&[0], 2), 0.0),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn combining_weights() {
        let a = Tensor::new(vec![2, 2], vec![0.3, 0.7, 0.6, 0.4]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let c = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.1, 0.9]).unwrap();
        let preds = [a.clone(), b.clone(), c.clone()];
        assert_eq!(combine_predictions(&preds, &[0.0, 1.0, 0.0]).unwrap(), b);
        assert_eq!(
            combine_predictions(&preds, &[2.0, 1.0, 1.0]).unwrap(),
            combine_predictions(&preds, &[0.5, 0.25, 0.25]).unwrap()
        );
        let same = [a.clone(), a.clone(), a.clone()];
        let out = combine_predictions(&same, &[0.2, 0.3, 0.5]).unwrap();
        for (x, y) in out.data().iter().zip(a.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(matches!(combine_predictions(&preds, &[0.0; 3]), Err(Error::Config(_))));
        assert!(matches!(combine_predictions(&preds, &[1.0, -1.0, 1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn metrics_on_hand_built_pairs() {
        // 10 samples, 3 classes: (prediction, label, baseline)
        let cases = [
            (0, 0, 0),
            (1, 1, 1),
            (2, 2, 1),
            (0, 1, 0),
            (1, 1, 2),
            (2, 0, 2),
            (0, 0, 1),
            (1, 2, 1),
            (2, 2, 2),
            (0, 2, 0),
        ];
        let mut data = Vec::new();
        for &(p, _, _) in &cases {
            let mut row = [0.1, 0.1, 0.1];
            row[p] = 0.8;
            data.extend(row);
        }
        let pred = Tensor::new(vec![10, 3], data).unwrap();
        let y: Vec<u32> = cases.iter().map(|c| c.1).collect();
        let b: Vec<u32> = cases.iter().map(|c| c.2).collect();
        let r = evaluate_predictions(&pred, &labels(&y, 3), &b, &[1.0]).unwrap();
        // correct: 0✓ 1✓ 2✓ 3✗ 4✓ 5✗ 6✓ 7✗ 8✓ 9✗
        assert_eq!(r.accuracy, 0.6);
        // agree: 0✓ 1✓ 2✗ 3✓ 4✗ 5✓ 6✗ 7✓ 8✓ 9✓
        assert_eq!(r.fidelity, 0.7);
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 10);
        assert_eq!(r.confusion[2][0], 1);
    }

    #[test]
    fn class_zero_predictor_on_uniform_labels() {
        let pred = Tensor::new(vec![4, 4], [[0.7, 0.1, 0.1, 0.1]; 4].concat()).unwrap();
        let r = evaluate_predictions(&pred, &labels(&[0, 1, 2, 3], 4), &[0, 0, 0, 0], &[1.0]).unwrap();
        assert_eq!(r.accuracy, 0.25);
        assert_eq!(r.fidelity, 1.0);
        assert!(matches!(
            evaluate_predictions(&pred, &labels(&[0, 1], 4), &[0, 0, 0, 0], &[1.0]),
            Err(Error::Alignment(_))
        ));
    }
}
