use crate::error::{Error, Result};

use super::{Scalar, Tensor4};

/// Mean squared error and its gradient `2 (pred − target) / count`.
/// The loss is accumulated in double precision.
pub fn mse_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    if pred.dims() != target.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let count = pred.len();
    if count == 0 {
        return Ok((0.0, pred.clone()));
    }
    let scale = T::from_f64_lossy(2.0 / count as f64);
    let mut sum = 0.0f64;
    let grad = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    Ok((sum / count as f64, Tensor4::from_vec(pred.dims(), grad)?))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn equal_inputs_have_zero_loss() {
        let t = Tensor4::from_fn([2, 1, 3, 3], |[b, _, y, x]| (b + y * x) as f32);
        let (loss, grad) = mse_loss(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_offset_gives_unit_loss() {
        let t = Tensor4::from_fn([1, 2, 4, 4], |[_, c, y, x]| (c * 7 + y + x) as f64 * 0.25);
        let p = t.map(|v| v + 1.0);
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 1.0);
        assert!(grad.as_slice().iter().all(|&g| (g - 2.0 / 32.0).abs() < 1e-15));
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Tensor4::from_fn([3, 2, 5, 4], |_| rng.random_range(-2.0..2.0));
        let t = Tensor4::from_fn([3, 2, 5, 4], |_| rng.random_range(0.0..1.0));
        let (loss, _) = mse_loss(&p, &t).unwrap();
        let mut acc = 0.0;
        for i in 0..p.len() {
            let d: f64 = p.as_slice()[i] - t.as_slice()[i];
            acc += d * d;
        }
        assert!((loss - acc / p.len() as f64).abs() < 1e-10);
    }

    #[test]
    fn dim_mismatch() {
        let a = Tensor4::<f32>::zeros(1, 1, 2, 2);
        let b = Tensor4::<f32>::zeros(1, 1, 2, 3);
        assert!(mse_loss(&a, &b).is_err());
    }
}
