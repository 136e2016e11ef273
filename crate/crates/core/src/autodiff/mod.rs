//! Dense tensors with tape-based reverse-mode differentiation, an Adam
//! optimizer, a finite-difference gradient checker and text checkpoints.
//!
//! All arithmetic is `f64`. A [`Graph`] is a single-use tape: record a
//! forward pass, call [`Graph::backward`] once, read gradients with
//! [`Graph::grad`].

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport, REL_ERR_FLOOR};
pub(crate) use graph::matmul_raw;
pub use graph::{Graph, Var};
pub use tensor::Tensor;
