//! Lloyd's k-means with k-means++ seeding, used to place the initial
//! cluster centroids in an embedding space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centroids: Tensor<f32>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

/// Best of `restarts` k-means runs by inertia.
pub fn kmeans_init(embeddings: &Tensor<f32>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    let n = embeddings.rows();
    let d = embeddings.cols();
    if k == 0 {
        return Err(Error::Config("k-means needs at least one cluster".into()));
    }
    if n < k {
        return Err(Error::Config(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let points: Vec<f64> = embeddings.data().iter().map(|&v| f64::from(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, Vec<usize>, f64, usize)> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus(&points, n, d, k, &mut rng);
        let (centroids, assignments, inertia, iterations) = lloyd(&points, n, d, init);
        if best.as_ref().is_none_or(|b| inertia < b.2) {
            best = Some((centroids, assignments, inertia, iterations));
        }
    }
    let (centroids, assignments, inertia, iterations) = best.expect("at least one restart");
    Ok(KMeansFit {
        centroids: Tensor::new(vec![k, d], centroids.iter().map(|&v| v as f32).collect())?,
        inertia,
        assignments,
        iterations,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(points: &[f64], n: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * d..(first + 1) * d]);
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(&points[i * d..(i + 1) * d], &centroids[..d]))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can land on a zero-weight tail; walk back to a candidate
            while nearest[chosen] == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(&points[pick * d..(pick + 1) * d]);
        let newc = &centroids[c * d..(c + 1) * d];
        for (i, m) in nearest.iter_mut().enumerate() {
            *m = m.min(sq_dist(&points[i * d..(i + 1) * d], newc));
        }
    }
    centroids
}

/// Nearest centroid per point (lowest index on ties) and total inertia.
pub(crate) fn assign(points: &[f64], n: usize, d: usize, centroids: &[f64]) -> (Vec<usize>, f64) {
    let k = centroids.len() / d;
    let mut out = Vec::with_capacity(n);
    let mut inertia = 0.0;
    for i in 0..n {
        let p = &points[i * d..(i + 1) * d];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(p, &centroids[c * d..(c + 1) * d]);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        out.push(best);
        inertia += best_d;
    }
    (out, inertia)
}

fn lloyd(points: &[f64], n: usize, d: usize, mut centroids: Vec<f64>) -> (Vec<f64>, Vec<usize>, f64, usize) {
    let k = centroids.len() / d;
    let (mut assignments, mut inertia) = assign(points, n, d, &centroids);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums[a * d..(a + 1) * d].iter_mut().zip(&points[i * d..(i + 1) * d]) {
                *s += v;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
        let (next, next_inertia) = assign(points, n, d, &centroids);
        inertia = next_inertia;
        if next == assignments {
            break;
        }
        assignments = next;
    }
    (centroids, assignments, inertia, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::make_blobs_with_centers;

    #[test]
    fn two_far_blobs_recover_means() {
        let sep = 50.0;
        let (x, labels, _) = make_blobs_with_centers(2, 100, 4, sep, 13).unwrap();
        let fit = kmeans_init(&x, 2, 5, 1).unwrap();
        for c in 0..2u32 {
            let members: Vec<usize> = (0..x.rows()).filter(|&i| labels.labels()[i] == c).collect();
            let mut mean = [0.0f64; 4];
            for &i in &members {
                for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                    *m += f64::from(v) / members.len() as f64;
                }
            }
            let closest = (0..2)
                .map(|k| {
                    fit.centroids
                        .row(k)
                        .iter()
                        .zip(&mean)
                        .map(|(&a, b)| (f64::from(a) - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.1 * sep, "{closest}");
        }
    }

    #[test]
    fn one_cluster_per_point_has_zero_inertia() {
        let x = Tensor::new(vec![5, 2], vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 3.0, 3.0, -2.0, 5.0]).unwrap();
        let fit = kmeans_init(&x, 5, 3, 2).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut rows: Vec<Vec<f32>> = fit.centroids.iter_rows().map(<[f32]>::to_vec).collect();
        let mut pts: Vec<Vec<f32>> = x.iter_rows().map(<[f32]>::to_vec).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, pts);
    }

    #[test]
    fn too_few_points_is_a_config_error() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(matches!(kmeans_init(&x, 3, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, _, _) = make_blobs_with_centers(3, 30, 3, 3.0, 5).unwrap();
        assert_eq!(kmeans_init(&x, 3, 4, 9).unwrap(), kmeans_init(&x, 3, 4, 9).unwrap());
    }
}
