//! A compact reverse-mode automatic differentiation tape for 4-D image
//! tensors (`N × C × H × W`), with im2col convolution kernels backed by
//! `matrixmultiply`.
//!
//! The element type is generic over [`Float`] so the same graph can run in
//! `f32` for training and in `f64` for finite-difference checking.

mod float;
mod graph;
mod kernels;
mod tensor;

pub use float::Float;
pub use graph::{ConvCfg, Gradients, Graph, Var};
pub use kernels::{bilinear_resize, conv_out_len, deconv_out_len};
pub use tensor::{Tensor, TensorError};
