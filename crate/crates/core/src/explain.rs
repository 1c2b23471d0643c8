//! Sample-based explanations (training examples nearest a query across
//! weighted layer embeddings) and concept-based explanations (training
//! examples nearest each cluster centroid).

use serde::{Deserialize, Serialize};

use crate::dec::ClusterModel;
use crate::error::{Error, Result};
use crate::store::LabelArray;
use crate::surrogate::normalize_weights;
use crate::tensor::{squared_distance, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub train_index: usize,
    /// `Σ_j ŵ_j · layer_sq_distances[j]`.
    pub combined_score: f64,
    /// Squared Euclidean distance in each layer's embedding space.
    pub layer_sq_distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub query_id: usize,
    /// Normalized weights the scores were computed with.
    pub weights: Vec<f64>,
    /// Ascending by score, ties by lower training index.
    pub neighbors: Vec<Neighbor>,
}

impl SimilarityResult {
    pub fn indices(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.train_index).collect()
    }
}

fn check_layers(query: &[&[f32]], train: &[Tensor<f32>], weights: &[f64]) -> Result<usize> {
    if query.len() != train.len() || weights.len() != train.len() || train.is_empty() {
        return Err(Error::Config(format!(
            "{} query layers, {} training layers, {} weights",
            query.len(),
            train.len(),
            weights.len()
        )));
    }
    let n = train[0].rows();
    for (j, (q, t)) in query.iter().zip(train).enumerate() {
        if q.len() != t.cols() {
            return Err(Error::Dimension(format!(
                "layer {j}: query embedding has {} dims, training embeddings {}",
                q.len(),
                t.cols()
            )));
        }
        if t.rows() != n {
            return Err(Error::Alignment(format!(
                "layer {j} has {} training embeddings, layer 0 has {n}",
                t.rows()
            )));
        }
    }
    Ok(n)
}

/// Top-`k` training examples by weighted sum of squared per-layer embedding
/// distances to the query.
pub fn rank_similar(
    query_id: usize,
    query: &[&[f32]],
    train: &[Tensor<f32>],
    weights: &[f64],
    top_k: usize,
) -> Result<SimilarityResult> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let n = check_layers(query, train, weights)?;
    let w = normalize_weights(weights)?;
    let mut scored: Vec<Neighbor> = (0..n)
        .map(|i| {
            let layer_sq_distances: Vec<f64> = query
                .iter()
                .zip(train)
                .map(|(q, t)| squared_distance(q, t.row(i)))
                .collect();
            let mut combined_score = 0.0;
            for (&wj, &d) in w.iter().zip(&layer_sq_distances) {
                if wj != 0.0 {
                    combined_score += wj * d;
                }
            }
            Neighbor {
                train_index: i,
                combined_score,
                layer_sq_distances,
            }
        })
        .collect();
    let order = |a: &Neighbor, b: &Neighbor| {
        a.combined_score
            .total_cmp(&b.combined_score)
            .then(a.train_index.cmp(&b.train_index))
    };
    let k = top_k.min(n);
    if k < n {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    Ok(SimilarityResult {
        query_id,
        weights: w,
        neighbors: scored,
    })
}

/// Embeds every layer's activations with its cluster model.
pub fn embed_layers(models: &[&ClusterModel], activations: &[Tensor<f32>]) -> Result<Vec<Tensor<f32>>> {
    if models.len() != activations.len() {
        return Err(Error::Config(format!(
            "{} models for {} activation blocks",
            models.len(),
            activations.len()
        )));
    }
    models.iter().zip(activations).map(|(m, a)| m.encode(a)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub layer_name: String,
    pub cluster: usize,
    /// The `m` training indices nearest the centroid, nearest first.
    pub members: Vec<usize>,
    pub member_distances: Vec<f64>,
    pub label_histogram: Vec<u64>,
    pub mean_distance: f64,
}

/// For each centroid, the `m` nearest training embeddings regardless of
/// hard assignment.
pub fn extract_concepts(
    model: &ClusterModel,
    train_embeddings: &Tensor<f32>,
    labels: &LabelArray,
    m: usize,
) -> Result<Vec<Concept>> {
    let n = train_embeddings.rows();
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "concept size {m} must lie in 1..={n}"
        )));
    }
    if labels.len() != n {
        return Err(Error::Alignment(format!("{n} embeddings for {} labels", labels.len())));
    }
    if train_embeddings.cols() != model.centroids.cols() {
        return Err(Error::Dimension(format!(
            "embeddings {:?} vs centroids {:?}",
            train_embeddings.shape(),
            model.centroids.shape()
        )));
    }
    let mut concepts = Vec::with_capacity(model.n_clusters());
    for (k, mu) in model.centroids.iter_rows().enumerate() {
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| (squared_distance(train_embeddings.row(i), mu).sqrt(), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if m < n {
            dist.select_nth_unstable_by(m - 1, order);
            dist.truncate(m);
        }
        dist.sort_by(order);
        let mut label_histogram = vec![0u64; labels.n_classes()];
        for &(_, i) in &dist {
            label_histogram[labels.labels()[i] as usize] += 1;
        }
        let member_distances: Vec<f64> = dist.iter().map(|d| d.0).collect();
        concepts.push(Concept {
            layer_name: model.layer_name.clone(),
            cluster: k,
            members: dist.iter().map(|d| d.1).collect(),
            mean_distance: member_distances.iter().sum::<f64>() / m as f64,
            member_distances,
            label_histogram,
        });
    }
    Ok(concepts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptPurity {
    /// Dominant-label fraction per concept.
    pub per_concept: Vec<f64>,
    pub mean: f64,
}

pub fn concept_purity(concepts: &[Concept]) -> ConceptPurity {
    let per_concept: Vec<f64> = concepts.iter().map(histogram_purity).collect();
    let mean = if per_concept.is_empty() {
        0.0
    } else {
        per_concept.iter().sum::<f64>() / per_concept.len() as f64
    };
    ConceptPurity { per_concept, mean }
}

fn histogram_purity(c: &Concept) -> f64 {
    let total: u64 = c.label_histogram.iter().sum();
    let max = c.label_histogram.iter().copied().max().unwrap_or(0);
    if total == 0 {
        0.0
    } else {
        max as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f32]) -> Tensor<f32> {
        Tensor::new(vec![rows, cols], data.to_vec()).unwrap()
    }

    fn concept(hist: &[u64]) -> Concept {
        Concept {
            layer_name: "l".into(),
            cluster: 0,
            members: vec![],
            member_distances: vec![],
            label_histogram: hist.to_vec(),
            mean_distance: 0.0,
        }
    }

    #[test]
    fn self_match_ranks_first() {
        let a = t(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 0.0, -1.0, 3.0]);
        let b = t(4, 1, &[5.0, 4.0, 3.0, 2.0]);
        let r = rank_similar(7, &[a.row(2), b.row(2)], &[a.clone(), b.clone()], &[1.0, 1.0], 3).unwrap();
        assert_eq!(r.neighbors[0].train_index, 2);
        assert_eq!(r.neighbors[0].combined_score, 0.0);
        assert_eq!(r.neighbors.len(), 3);
        assert_eq!(r.query_id, 7);
    }

    #[test]
    fn one_hot_weights_reduce_to_single_layer_ranking() {
        let a = t(5, 1, &[0.0, 3.0, 1.0, 4.0, 2.0]);
        let b = t(5, 1, &[4.0, 3.0, 2.0, 1.0, 0.0]);
        let q: [&[f32]; 2] = [&[0.0], &[0.0]];
        let r = rank_similar(0, &q, &[a.clone(), b.clone()], &[0.0, 1.0], 5).unwrap();
        assert_eq!(r.indices(), vec![4, 3, 2, 1, 0]);
        assert_eq!(r.neighbors[1].combined_score, 1.0);
        let r = rank_similar(0, &q, &[a, b], &[3.0, 0.0], 5).unwrap();
        assert_eq!(r.indices(), vec![0, 2, 4, 1, 3]);
    }

    #[test]
    fn ties_prefer_lower_index_and_k_is_clamped() {
        let a = t(3, 1, &[1.0, -1.0, 1.0]);
        let r = rank_similar(0, &[&[0.0]], &[a], &[1.0], 10).unwrap();
        assert_eq!(r.indices(), vec![0, 1, 2]);
    }

    #[test]
    fn bad_arguments() {
        let a = t(3, 1, &[1.0, -1.0, 1.0]);
        assert!(matches!(rank_similar(0, &[&[0.0]], std::slice::from_ref(&a), &[1.0], 0), Err(Error::Config(_))));
        assert!(matches!(rank_similar(0, &[&[0.0]], std::slice::from_ref(&a), &[0.0], 1), Err(Error::Config(_))));
        assert!(matches!(
            rank_similar(0, &[&[0.0, 1.0]], &[a], &[1.0], 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn purity_arithmetic() {
        assert_eq!(concept_purity(&[concept(&[0, 4, 0])]).mean, 1.0);
        assert_eq!(concept_purity(&[concept(&[2, 2, 2])]).mean, 1.0 / 3.0);
        assert_eq!(concept_purity(&[concept(&[3, 1, 1])]).mean, 0.6);
        let p = concept_purity(&[concept(&[3, 1, 1]), concept(&[0, 4, 0])]);
        assert_eq!(p.per_concept, vec![0.6, 1.0]);
        assert_eq!(p.mean, 0.8);
    }

    fn model_with_centroids(centroids: Tensor<f32>) -> ClusterModel {
        let cfg = crate::dec::DecConfig {
            embedding_dim: centroids.cols(),
            n_clusters: centroids.rows(),
            hidden_dim: 4,
            ..Default::default()
        };
        ClusterModel {
            layer_name: "layer1".into(),
            input_scale: 1.0,
            encoder: crate::dec::build_encoder(3, &cfg, 0).unwrap(),
            decoder: crate::dec::build_decoder(3, &cfg, 1).unwrap(),
            centroids,
            config: cfg,
            diagnostics: Default::default(),
        }
    }

    #[test]
    fn concepts_take_nearest_points_even_without_members() {
        // centroid 1 sits far from every point, so no point is hard-assigned to it
        let model = model_with_centroids(t(2, 2, &[0.0, 0.0, 100.0, 100.0]));
        let emb = t(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 3.0]);
        let labels = LabelArray::new(vec![0, 1, 1, 0], 2).unwrap();
        let c = extract_concepts(&model, &emb, &labels, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members, vec![0]);
        assert_eq!(c[0].member_distances, vec![0.0]);
        assert_eq!(c[1].members, vec![3]);
        let c = extract_concepts(&model, &emb, &labels, 3).unwrap();
        assert_eq!(c[0].members, vec![0, 1, 2]);
        assert_eq!(c[0].label_histogram, vec![1, 2]);
        assert_eq!(c[0].mean_distance, 1.0);
        assert!(matches!(extract_concepts(&model, &emb, &labels, 5), Err(Error::Config(_))));
        assert!(matches!(extract_concepts(&model, &emb, &labels, 0), Err(Error::Config(_))));
    }
}
