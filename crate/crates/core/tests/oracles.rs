mod common;

use actclust::dec::SoftAssignment;
use actclust::explain::rank_similar;
use actclust::kmeans::kmeans_init;
use actclust::surrogate::{EmpiricalPosterior, LayerSurrogate};
use actclust::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;


#[test]
fn ranking_matches_exhaustive_scoring() {
    for seed in 0..5 {
        let dims = [20, 20, 20];
        let train: Vec<Tensor<f32>> = dims.iter().enumerate().map(|(j, &d)| common::random_f32(50, d, 8.0, seed * 10 + j as u64)).collect();
        let query: Vec<Vec<f32>> = dims.iter().enumerate().map(|(j, &d)| common::random_f32(1, d, 8.0, 99 + seed * 10 + j as u64).data().to_vec()).collect();
        let weights = [2.0, 1.0, 1.0];
        let q: Vec<&[f32]> = query.iter().map(Vec::as_slice).collect();
        let got = rank_similar(0, &q, &train, &weights, 50).unwrap();
        let want = common::brute_force_ranking(&query, &train, &weights);
        assert_eq!(got.indices(), want.iter().map(|w| w.0).collect::<Vec<_>>());
        for (n, w) in got.neighbors.iter().zip(&want) {
            assert!((n.combined_score - w.1).abs() < 1e-6);
        }
    }
}



#[test]
fn kmeans_reaches_the_exhaustive_optimum() {
    let points = common::planted_twelve(7);
    let flat: Vec<f32> = points.iter().flat_map(|p| [p[0] as f32, p[1] as f32]).collect();
    let x = Tensor::new(vec![12, 2], flat.clone()).unwrap();
    let fit = kmeans_init(&x, 3, 10, 3).unwrap();
    // compare on the f32-rounded coordinates the library actually sees
    let rounded: Vec<[f64; 2]> = flat.chunks(2).map(|c| [c[0] as f64, c[1] as f64]).collect();
    let best = common::brute_force_inertia(&rounded);
    assert!((fit.inertia - best).abs() < 1e-6 * best.max(1.0), "{} vs {best}", fit.inertia);
}

#[test]
fn layer_prediction_matches_naive_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, k, c) = (30, 6, 4);
    let mut q = vec![0.0f64; n * k];
    for row in q.chunks_mut(k) {
        row.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mut p = vec![0.0f64; k * c];
    for row in p.chunks_mut(c) {
        row.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let model = common::model_with_centroids(common::random_f32(k, 3, 1.0, 1), 5);
    let ls = LayerSurrogate::new(
        model,
        EmpiricalPosterior {
            matrix: Tensor::new(vec![k, c], p.clone()).unwrap(),
            epsilon: 0.0,
        },
    )
    .unwrap();
    let out = ls
        .predict_from_assignment(&SoftAssignment {
            q: Tensor::new(vec![n, k], q.clone()).unwrap(),
        })
        .unwrap();
    for i in 0..n {
        for y in 0..c {
            let mut want = 0.0;
            for z in 0..k {
                want += q[i * k + z] * p[z * c + y];
            }
            assert!((out.row(i)[y] - want).abs() < 1e-6);
        }
        assert!((out.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
