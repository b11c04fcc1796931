//! Whole-network check of the analytic gradient against central finite
//! differences in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::{Network, NetworkConfig};
use crate::numerics::{mse_loss, Tensor4};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is essentially zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Builds a small random two-contrast network and input batch from `seed`
/// and compares `coordinates` randomly chosen parameter derivatives of the
/// MSE loss.
pub fn network_gradcheck(seed: u64, coordinates: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(2..=3);
    let mut net = Network::<f64>::build(NetworkConfig::with_depth(2, depth, 2)?, seed)?;
    for layer in net.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.random_range(0.05..0.2);
        }
    }
    let (h, w) = (rng.random_range(5..=9), rng.random_range(5..=9));
    let mut tensor = |c| Tensor4::from_fn([2, c, h, w], |_| rng.random_range(0.0..1.0));
    let inputs = vec![tensor(1), tensor(1)];
    let target = tensor(1);

    let loss = |n: &Network<f64>| -> Result<f64> { Ok(mse_loss(&n.forward(&inputs)?, &target)?.0) };
    let cache = net.forward_training(&inputs)?;
    let (_, grad_out) = mse_loss(cache.prediction(), &target)?;
    let grads = net.backward(&cache, &grad_out)?;

    let mut report = GradCheckReport {
        coordinates,
        max_relative_error: 0.0,
        max_abs_gradient: 0.0,
    };
    let n_layers = net.layers().len();
    for _ in 0..coordinates {
        let l = rng.random_range(0..n_layers);
        let on_bias = rng.random_bool(0.25);
        let (i, analytic) = if on_bias {
            let i = rng.random_range(0..grads.biases[l].len());
            (i, grads.biases[l][i])
        } else {
            let i = rng.random_range(0..grads.weights[l].len());
            (i, grads.weights[l].as_slice()[i])
        };
        let probe = |delta: f64| -> Result<f64> {
            let mut n = net.clone();
            let layer = &mut n.layers_mut()[l];
            if on_bias {
                layer.bias_mut()[i] += delta;
            } else {
                layer.weights_mut().as_mut_slice()[i] += delta;
            }
            loss(&n)
        };
        let numeric = (probe(FD_STEP)? - probe(-FD_STEP)?) / (2.0 * FD_STEP);
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic, numeric));
        report.max_abs_gradient = report.max_abs_gradient.max(analytic.abs());
    }
    Ok(report)
}
