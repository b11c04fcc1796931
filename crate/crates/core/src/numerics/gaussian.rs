use crate::error::{Error, Result};

/// Truncated Gaussian `exp(−x²/2σ²)` sampled at integer offsets
/// `−size/2 ..= size/2` and renormalized to unit sum.
pub fn gaussian_kernel_1d(sigma: f64, size: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    if size % 2 == 0 {
        return Err(Error::invalid(format!("gaussian kernel size must be odd, got {size}")));
    }
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Outer product of two 1D kernels, row-major `size × size`.
pub fn gaussian_kernel_2d(sigma: f64, size: usize) -> Result<Vec<f64>> {
    let k = gaussian_kernel_1d(sigma, size)?;
    Ok(k.iter().flat_map(|a| k.iter().map(move |b| a * b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_one_and_a_half() {
        // exp(-1/4.5) = 0.800737..., normalizer 1 + 2 * 0.800737
        let k = gaussian_kernel_1d(1.5, 3).unwrap();
        let e = (-1.0f64 / 4.5).exp();
        let expect = [e / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        for (a, b) in k.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((k[0] - 0.30779).abs() < 1e-4);
        assert!((k[1] - 0.38442).abs() < 1e-4);
    }

    #[test]
    fn delta_limit() {
        assert_eq!(gaussian_kernel_1d(1e-3, 3).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gaussian_kernel_1d(0.0, 3).is_err());
        assert!(gaussian_kernel_1d(-1.0, 3).is_err());
        assert!(gaussian_kernel_1d(1.0, 4).is_err());
    }

    #[test]
    fn normalized_symmetric_monotone() {
        for sigma in [0.3, 0.7, 1.0, 1.5, 2.5, 10.0] {
            for size in [3, 5, 7] {
                let k = gaussian_kernel_1d(sigma, size).unwrap();
                assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for i in 0..size {
                    assert_eq!(k[i], k[size - 1 - i]);
                    assert!(k[i] > 0.0);
                }
                for i in 0..size / 2 {
                    assert!(k[i] <= k[i + 1]);
                }
            }
        }
        let k2 = gaussian_kernel_2d(1.5, 3).unwrap();
        assert!((k2.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
