//! Dense arrays, reverse-mode gradients, optimizers and gradient checking.

pub mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradReport, ParamCheck, FD_STEP};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind};
pub use params::{AdamState, ParamEntry, ParamStore};
pub use tape::{OpKind, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::sigmoid;
