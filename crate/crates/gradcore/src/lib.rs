//! Reverse-mode differentiable tensors over real and complex data.
//!
//! Every operation records a node in a dynamically built graph when gradient
//! recording is enabled and at least one input carries a diff record. The
//! backward rules are themselves written in terms of recorded operations, so
//! running [`backward`] with `create_graph = true` yields gradients that can be
//! differentiated again. This second-order path is what a gradient penalty on
//! an input needs.
//!
//! Conventions:
//! - storage is row-major; complex tensors interleave `(re, im)` pairs;
//! - for a real loss `L` of a complex tensor `z = x + iy`, the gradient is
//!   reported as `dL/dx + i dL/dy`;
//! - [`Tensor::fft2`] and [`Tensor::ifft2`] are orthonormal (`1/sqrt(h*w)` in
//!   both directions) and act on the last two axes; DC sits at index `[0, 0]`
//!   until [`Tensor::fftshift`] moves it to the center;
//! - [`Tensor::conv2d`] is a cross-correlation (no kernel flip).

mod error;
mod float;
mod graph;
mod shape;
mod tensor;

pub mod gradcheck;
pub mod ops;

pub use error::{GradError, Result};
pub use float::Float;
pub use graph::{
    backward, grad, is_checked, is_grad_enabled, no_grad, set_checked, CheckedGuard, Gradients,
    NoGradGuard,
};
pub use ops::conv::Padding;
pub use ops::pool::PoolKind;
pub use tensor::{DType, Tensor};
