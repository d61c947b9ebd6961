//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grad::loss_and_gradients;
use super::network::{init_network, MlpNetwork, Stage};
use super::train::TrainConfig;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSummary {
    pub networks: usize,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
}

// Weights first, then biases.
fn param_mut(net: &mut MlpNetwork, stage: Stage, p: usize) -> &mut f64 {
    let l = net.layer_mut(stage);
    let n_w = l.weights().len();
    if p < n_w {
        &mut l.weights_mut()[p]
    } else {
        &mut l.bias_mut()[p - n_w]
    }
}

/// Worst `|numeric - analytic| / max(|numeric|, |analytic|, 1e-6)` over every parameter.
pub fn max_relative_error(
    net: &MlpNetwork,
    y: &[f64],
    x: Option<&[f64]>,
    cfg: &TrainConfig,
    step: f64,
) -> Result<f64> {
    let (_, grads) = loss_and_gradients(net, y, x, cfg)?;
    let loss = |n: &MlpNetwork| loss_and_gradients(n, y, x, cfg).map(|(l, _)| l.total);
    let mut worst = 0.0_f64;
    let mut probe = net.clone();
    for stage in Stage::ALL {
        let i = stage.index();
        let n_w = net.layer(stage).weights().len();
        let n_b = net.layer(stage).bias().len();
        for p in 0..n_w + n_b {
            let original = *param_mut(&mut probe, stage, p);
            *param_mut(&mut probe, stage, p) = original + step;
            let up = loss(&probe)?;
            *param_mut(&mut probe, stage, p) = original - step;
            let down = loss(&probe)?;
            *param_mut(&mut probe, stage, p) = original;
            let numeric = (up - down) / (2.0 * step);
            let analytic = if p < n_w {
                grads.layers[i].weights[p]
            } else {
                grads.layers[i].bias[p - n_w]
            };
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// A network with every parameter drawn uniformly, biases included.
pub fn random_network(width: usize, seed: u64) -> Result<MlpNetwork> {
    let mut net = init_network(width, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for stage in Stage::ALL {
        let l = net.layer_mut(stage);
        l.weights_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
        l.bias_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
    Ok(net)
}

/// Checks `count` random networks with widths cycling through 4..=8 on
/// random `(x, y)` windows under the composite loss.
pub fn check_random_networks(count: usize, seed: u64) -> Result<GradCheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = GradCheckSummary {
        networks: 0,
        parameters_checked: 0,
        max_relative_error: 0.0,
    };
    for k in 0..count {
        let w = 4 + k % 5;
        let net = random_network(w, rng.random())?;
        let y: Vec<f64> = (0..w).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x: Vec<f64> = (0..w).map(|_| rng.random_range(-1.5..1.5)).collect();
        let cfg = TrainConfig {
            alpha: rng.random_range(0.1..2.0),
            beta: rng.random_range(0.1..2.0),
            window_length: w,
            ..TrainConfig::default()
        };
        let err = max_relative_error(&net, &y, Some(&x), &cfg, FD_STEP)?;
        summary.networks += 1;
        summary.parameters_checked += net.num_parameters();
        summary.max_relative_error = summary.max_relative_error.max(err);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_networks_pass() {
        let s = check_random_networks(5, 3).unwrap();
        assert_eq!(s.networks, 5);
        assert!(s.max_relative_error < 1e-4, "{s:?}");
    }

    #[test]
    fn reading_only_loss_passes() {
        let net = random_network(5, 9).unwrap();
        let cfg = TrainConfig {
            window_length: 5,
            ..TrainConfig::default()
        };
        let y = [0.3, -1.0, 0.7, 0.0, 1.2];
        assert!(max_relative_error(&net, &y, None, &cfg, FD_STEP).unwrap() < 1e-4);
    }
}
