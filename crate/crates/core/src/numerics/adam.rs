use crate::error::{Error, Result};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a list of parameter blocks.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, block_lens: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: block_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: block_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.v
    }

    /// One update. Gradients are validated before anything is modified, so a
    /// rejected step leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam tracks {} blocks, got {} parameter and {} gradient blocks",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape(format!("adam block {i} length mismatch")));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient block {i} entry {j}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
        let (a1, a2) = (T::from_f64_lossy(1.0 - beta1), T::from_f64_lossy(1.0 - beta2));

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + a1 * g[i];
                v[i] = b2 * v[i] + a2 * g[i] * g[i];
                let m_hat = m[i].as_f64() / c1;
                let v_hat = v[i].as_f64() / c2;
                let delta = learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                p[i] = T::from_f64_lossy(p[i].as_f64() - delta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_gradient_first_step_is_noop() {
        let mut state = AdamState::<f64>::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        state.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, before);
        assert!(state.first_moment()[0].iter().all(|&m| m == 0.0));
        assert!(state.second_moment()[0].iter().all(|&v| v == 0.0));
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_sign() {
        let mut state = AdamState::<f64>::new(AdamConfig::default(), &[4]);
        let mut p = vec![0.0; 4];
        let g = [3.0, -0.01, 1e3, -7.5];
        state.step(&mut [&mut p], &[&g]).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            // m_hat = g, v_hat = g², so the step is lr·g/(|g|+eps)
            let expect = -1e-4 * gi / (gi.abs() + 1e-8);
            assert!((pi - expect).abs() < 1e-15);
            assert!(pi.abs() <= 1e-4 * (1.0 + 1e-8));
        }
    }

    #[test]
    fn two_step_trace() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::<f64>::new(cfg, &[1]);
        let mut p = vec![1.0];
        let g = 0.5;
        state.step(&mut [&mut p], &[&[g]]).unwrap();
        state.step(&mut [&mut p], &[&[g]]).unwrap();

        let mut x = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 1e-4 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - x).abs() < 1e-12);
        assert!((p[0] - (1.0 - 2e-4)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut state = AdamState::<f32>::new(AdamConfig::default(), &[2]);
        let mut p = vec![1.0f32, 2.0];
        let err = state.step(&mut [&mut p], &[&[0.1, f32::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn descends_convex_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scales: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..5.0)).collect();
        let target: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |x: &[f64]| -> f64 {
            x.iter()
                .zip(&scales)
                .zip(&target)
                .map(|((xi, s), t)| s * (xi - t).powi(2))
                .sum()
        };
        let mut x = vec![0.0; 10];
        let start = f(&x);
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        let mut state = AdamState::<f64>::new(cfg, &[10]);
        for _ in 0..500 {
            let g: Vec<f64> = x
                .iter()
                .zip(&scales)
                .zip(&target)
                .map(|((xi, s), t)| 2.0 * s * (xi - t))
                .collect();
            state.step(&mut [&mut x], &[&g]).unwrap();
        }
        assert!(f(&x) <= 0.01 * start, "{} -> {}", start, f(&x));
    }
}
