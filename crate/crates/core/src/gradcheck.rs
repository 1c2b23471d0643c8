//! Central finite-difference check of [`Network::backprop`].

use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Entries compared.
    pub checked: usize,
    /// Entries whose ±eps perturbation moved a ReLU input across zero; the
    /// finite difference is meaningless there.
    pub skipped_kinks: usize,
}

/// Entries whose analytic and numeric values are both below this are
/// compared on an absolute basis.
pub const GRAD_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares analytic gradients of `L = Σ upstream ⊙ net(x)` with central
/// differences of step `eps` for every parameter and every input entry.
pub fn check_gradients(
    net: &Network<f64>,
    x: &Tensor<f64>,
    upstream: &Tensor<f64>,
    eps: f64,
) -> Result<GradCheckReport> {
    if eps <= 0.0 {
        return Err(Error::Config("eps must be positive".into()));
    }
    let mut work = net.clone();
    work.forward_train(x)?;
    let analytic = work.backprop(upstream)?;
    let base_pattern = relu_pattern(&work, x)?;

    let mut report = GradCheckReport::default();
    let n_params = work.params().len();
    for p in 0..n_params {
        let len = work.params()[p].len();
        for e in 0..len {
            let orig = work.params()[p].data()[e];
            work.params_mut()[p].data_mut()[e] = orig + eps;
            let (lp, pat_p) = objective(&work, x, upstream)?;
            work.params_mut()[p].data_mut()[e] = orig - eps;
            let (lm, pat_m) = objective(&work, x, upstream)?;
            work.params_mut()[p].data_mut()[e] = orig;
            if pat_p != base_pattern || pat_m != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let err = relative_error(analytic.params[p].data()[e], numeric);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
    }

    let mut xp = x.clone();
    for e in 0..x.len() {
        let orig = xp.data()[e];
        xp.data_mut()[e] = orig + eps;
        let (lp, pat_p) = objective(&work, &xp, upstream)?;
        xp.data_mut()[e] = orig - eps;
        let (lm, pat_m) = objective(&work, &xp, upstream)?;
        xp.data_mut()[e] = orig;
        if pat_p != base_pattern || pat_m != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * eps);
        let err = relative_error(analytic.input.data()[e], numeric);
        report.max_rel_error = report.max_rel_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

fn objective(net: &Network<f64>, x: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(f64, Vec<bool>)> {
    let out = net.forward(x)?;
    let loss = out
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(a, b)| a * b)
        .sum();
    Ok((loss, relu_pattern(net, x)?))
}

/// Sign of every ReLU input for the batch.
fn relu_pattern(net: &Network<f64>, x: &Tensor<f64>) -> Result<Vec<bool>> {
    let outs = net.forward_all(x)?;
    let mut pattern = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if let Layer::Relu { .. } = layer {
            let input = if i == 0 { x } else { &outs[i - 1] };
            pattern.extend(input.data().iter().map(|&v| v > 0.0));
        }
    }
    Ok(pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn detects_a_wrong_gradient() {
        // A network whose analytic gradient is correct passes, and the checker
        // is not vacuous: relative_error flags an obviously wrong value.
        let net = Network::<f64>::mlp(&[3, 4, 2], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::new(vec![2, 3], (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let up = Tensor::new(vec![2, 2], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let report = check_gradients(&net, &x, &up, 1e-3).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert!(relative_error(1.0, 1.1) > 0.05);
    }
}
