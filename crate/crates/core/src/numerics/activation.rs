use crate::error::{Error, Result};

use super::{Scalar, Tensor4};

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `upstream` where `input > 0`. Because `relu(x) > 0` exactly when
/// `x > 0`, the forward output may be supplied in place of its input.
pub fn relu_backward<T: Scalar>(input: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>> {
    if input.dims() != upstream.dims() {
        return Err(Error::shape(format!(
            "relu input {:?} vs upstream {:?}",
            input.dims(),
            upstream.dims()
        )));
    }
    let data = input
        .as_slice()
        .iter()
        .zip(upstream.as_slice())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(input.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition() {
        let x = Tensor4::from_vec([1, 1, 1, 3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let g = Tensor4::from_vec([1, 1, 1, 3], vec![5.0f32, 6.0, 7.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().as_slice(), &[0.0, 0.0, 7.0]);
    }

    #[test]
    fn all_negative_is_dead() {
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![-1.0f64, -0.5, -3.0, -1e-9]).unwrap();
        assert!(relu(&x).as_slice().iter().all(|&v| v == 0.0));
        let g = x.map(|_| 1.0);
        assert!(relu_backward(&x, &g).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }
}
