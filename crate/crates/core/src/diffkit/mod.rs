//! Minimal reverse-mode automatic differentiation over dense tensors, with
//! the layers, optimizer and checkpoint format used by the trainable models.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod nn;
mod ops;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::Mask;
pub use optim::{noam_lr, AdamConfig, AdamState};
pub use params::{normal, xavier_uniform, Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Float, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
