//! Dense tensor math with exact analytic gradients for the fixed
//! convolution / ReLU / mean-squared-error chain, plus the Adam optimizer
//! and the small Gaussian kernels used to build membership targets.

mod activation;
mod adam;
mod conv;
mod gaussian;
mod loss;
mod scalar;
mod tensor;

pub use activation::{relu, relu_backward};
pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d_backward, conv2d_forward, Conv2DLayer, ConvGradients};
pub use gaussian::{gaussian_kernel_1d, gaussian_kernel_2d};
pub use loss::mse_loss;
pub use scalar::Scalar;
pub use tensor::Tensor4;
