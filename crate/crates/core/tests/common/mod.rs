//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::VecDeque;

use flexconn::network::{Network, NetworkConfig};
use flexconn::numerics::{conv2d_backward, conv2d_forward, mse_loss, Conv2DLayer, Tensor4};
use flexconn::Volume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step and the relative-error floor used throughout.
pub const FD_STEP: f64 = 1e-5;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Six-loop zero-padded "same" convolution (cross-correlation).
pub fn naive_conv(x: &Tensor4<f64>, w: &Tensor4<f64>, b: &[f64]) -> Tensor4<f64> {
    let [n, c_in, h, wd] = x.dims();
    let [c_out, _, k, _] = w.dims();
    let p = (k / 2) as isize;
    Tensor4::from_fn([n, c_out, h, wd], |[bi, o, y, xx]| {
        let mut s = b[o];
        for c in 0..c_in {
            for ky in 0..k {
                for kx in 0..k {
                    let sy = y as isize + ky as isize - p;
                    let sx = xx as isize + kx as isize - p;
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                        s += w.get(o, c, ky, kx) * x.get(bi, c, sy as usize, sx as usize);
                    }
                }
            }
        }
        s
    })
}

// ---------------------------------------------------------------- gradients

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

pub fn dot(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Max relative error of every analytic derivative of `Σ r ⊙ conv(x)`.
pub fn layer_case(rng: &mut ChaCha8Rng) -> f64 {
    let k = if rng.random_bool(0.5) { 3 } else { 5 };
    let (c_in, c_out) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let (n, h, w) = (rng.random_range(1..=2), rng.random_range(1..=9), rng.random_range(1..=9));
    let x = random_tensor(rng, [n, c_in, h, w]);
    let weights = random_tensor(rng, [c_out, c_in, k, k]);
    let bias: Vec<f64> = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let layer = Conv2DLayer::new(weights.clone(), bias.clone()).unwrap();
    let r = random_tensor(rng, [n, c_out, h, w]);

    let y = conv2d_forward(&x, &layer).unwrap();
    let oracle = naive_conv(&x, &weights, &bias);
    for (a, b) in y.as_slice().iter().zip(oracle.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
    let g = conv2d_backward(&x, &layer, &r).unwrap();
    let loss = |x: &Tensor4<f64>, l: &Conv2DLayer<f64>| dot(&conv2d_forward(x, l).unwrap(), &r);

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.as_mut_slice()[i] += FD_STEP;
        xm.as_mut_slice()[i] -= FD_STEP;
        let fd = (loss(&xp, &layer) - loss(&xm, &layer)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.input.as_slice()[i], fd));
    }
    for i in 0..weights.len() {
        let (mut lp, mut lm) = (layer.clone(), layer.clone());
        lp.weights_mut().as_mut_slice()[i] += FD_STEP;
        lm.weights_mut().as_mut_slice()[i] -= FD_STEP;
        let fd = (loss(&x, &lp) - loss(&x, &lm)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.weights.as_slice()[i], fd));
    }
    for o in 0..c_out {
        let (mut lp, mut lm) = (layer.clone(), layer.clone());
        lp.bias_mut()[o] += FD_STEP;
        lm.bias_mut()[o] -= FD_STEP;
        let fd = (loss(&x, &lp) - loss(&x, &lm)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.bias[o], fd));
    }
    worst
}

/// 20 random parameter coordinates of the MSE loss of a small two-contrast
/// network, in double precision.
pub fn network_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::build(NetworkConfig::with_depth(2, 2, 2).unwrap(), seed).unwrap();
    for layer in net.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.random_range(0.05..0.2);
        }
    }
    let inputs = vec![
        Tensor4::from_fn([2, 1, 7, 8], |_| rng.random_range(0.0..1.0)),
        Tensor4::from_fn([2, 1, 7, 8], |_| rng.random_range(0.0..1.0)),
    ];
    let target = Tensor4::from_fn([2, 1, 7, 8], |_| rng.random_range(0.0..1.0));
    let loss = |n: &Network<f64>| mse_loss(&n.forward(&inputs).unwrap(), &target).unwrap().0;
    let cache = net.forward_training(&inputs).unwrap();
    let (_, grad_out) = mse_loss(cache.prediction(), &target).unwrap();
    let grads = net.backward(&cache, &grad_out).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let l = rng.random_range(0..net.layers().len());
        let i = rng.random_range(0..grads.weights[l].len());
        let mut p = net.clone();
        p.layers_mut()[l].weights_mut().as_mut_slice()[i] += FD_STEP;
        let mut m = net.clone();
        m.layers_mut()[l].weights_mut().as_mut_slice()[i] -= FD_STEP;
        let fd = (loss(&p) - loss(&m)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grads.weights[l].as_slice()[i], fd));
    }
    worst
}

// ---------------------------------------------------------------- metrics

/// Flood-fill labeling of nonzero voxels. `conn` is 6, 18 or 26.
pub fn flood_components(v: &Volume, conn: usize) -> Vec<Vec<usize>> {
    let [nx, ny, nz] = v.dims();
    let on: Vec<bool> = v.data().iter().map(|&x| x != 0.0).collect();
    let mut seen = vec![false; on.len()];
    let mut offsets = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nonzero = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                let keep = match conn {
                    6 => nonzero == 1,
                    18 => nonzero == 1 || nonzero == 2,
                    26 => nonzero >= 1,
                    _ => panic!("connectivity {conn}"),
                };
                if keep {
                    offsets.push((dx, dy, dz));
                }
            }
        }
    }
    let mut comps = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y, z) = ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
            for &(dx, dy, dz) in &offsets {
                let (a, b, c) = (x + dx, y + dy, z + dz);
                if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                    continue;
                }
                let j = (a + nx as i64 * (b + ny as i64 * c)) as usize;
                if on[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        comps.push(comp);
    }
    comps
}

#[derive(Debug, PartialEq)]
pub struct OracleMetrics {
    pub dice: f64,
    pub ppv: f64,
    pub lfpr: f64,
    pub ltpr: f64,
    /// `None` when the manual segmentation is empty.
    pub vd: Option<f64>,
}

pub fn oracle_metrics(auto: &Volume, manual: &Volume) -> OracleMetrics {
    let a_on: Vec<bool> = auto.data().iter().map(|&x| x != 0.0).collect();
    let m_on: Vec<bool> = manual.data().iter().map(|&x| x != 0.0).collect();
    let a = a_on.iter().filter(|&&x| x).count();
    let m = m_on.iter().filter(|&&x| x).count();
    let both = a_on.iter().zip(&m_on).filter(|(x, y)| **x && **y).count();
    let dice = if a + m == 0 { 1.0 } else { (2 * both) as f64 / (a + m) as f64 };
    let ppv = match (a, m) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => both as f64 / a as f64,
    };
    let auto_comps = flood_components(auto, 18);
    let manual_comps = flood_components(manual, 18);
    let lfpr = if auto_comps.is_empty() {
        0.0
    } else {
        let false_pos = auto_comps.iter().filter(|c| c.iter().all(|&i| !m_on[i])).count();
        false_pos as f64 / auto_comps.len() as f64
    };
    let ltpr = if manual_comps.is_empty() {
        1.0
    } else {
        let found = manual_comps.iter().filter(|c| c.iter().any(|&i| a_on[i])).count();
        found as f64 / manual_comps.len() as f64
    };
    let vd = (m > 0).then(|| (a as f64 - m as f64).abs() / m as f64);
    OracleMetrics { dice, ppv, lfpr, ltpr, vd }
}

// ---------------------------------------------------------------- wilcoxon

/// Two-sided exact signed-rank p-value by listing every sign assignment.
/// Zero differences are dropped and tied magnitudes get average ranks.
/// Returns `(w_plus, w_minus, p)`.
pub fn enumerate_wilcoxon(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|&v| v != 0.0).collect();
    let n = d.len();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        // average rank = (#smaller) + (#equal + 1) / 2
        let smaller = d.iter().filter(|v| v.abs() < d[i].abs()).count();
        let equal = d.iter().filter(|v| v.abs() == d[i].abs()).count();
        ranks[i] = smaller as f64 + (equal as f64 + 1.0) / 2.0;
    }
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let total: f64 = ranks.iter().sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w_plus + 1e-9 {
            le += 1;
        }
        if s >= w_plus - 1e-9 {
            ge += 1;
        }
    }
    let p = (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0);
    (w_plus, total - w_plus, p)
}
