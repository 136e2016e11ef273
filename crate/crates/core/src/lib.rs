//! Merge tree neural networks: learned, fast similarity between merge trees
//! of scalar fields.
//!
//! The crate covers the whole pipeline: synthetic scalar-field ensembles
//! ([`scalarfield`]), join-tree construction and persistence simplification
//! ([`mergetree`]), the labeled interleaving distance used as ground truth
//! ([`groundtruth`]), a small reverse-mode autodiff engine ([`autodiff`]),
//! the GCN/GIN encoders with topological attention ([`mtnn`]) and training,
//! evaluation and analysis ([`pipeline`]).

pub mod autodiff;
pub mod error;
pub mod groundtruth;
pub mod mergetree;
pub mod mtnn;
pub mod pipeline;
pub mod rng;
pub mod scalarfield;
mod unionfind;

pub use error::{Error, Result};
