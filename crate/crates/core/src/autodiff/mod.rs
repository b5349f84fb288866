//! Dense tensors with reverse-mode differentiation over the operations a
//! graph-wired convolutional classifier needs.

mod grad_check;
mod kernels;
mod tape;
mod tensor;

pub use grad_check::{grad_check, GradCheckConfig, GradCheckReport};
pub use kernels::{update_running_stats, BatchStats, Conv2dSpec};
pub use tape::{GateMode, Gradients, Tape, Var};
pub use tensor::Tensor;
