//! Minimal reverse-mode differentiation for the operations the networks use.

mod adam;
pub mod gradcheck;
mod graph;
mod kernels;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheckReport, FD_STEP};
pub use graph::{Graph, Var};
pub use params::{glorot_uniform, Bound, ParamStore};
pub use tensor::Tensor;

/// Output extent of a padded, strided window along one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}
