//! The merge tree neural network: GCN or GIN encoders, plain or
//! persistence-weighted attention pooling, a tensor network and a node
//! similarity histogram feeding a small scoring head.
//!
//! Node features are the normalized function values. A pair score is in
//! `(0, 1)` and is trained against the normalized interleaving distance.

mod config;
mod layers;
mod model;
mod params;

pub use config::{Activation, Attention, Encoder, ModelConfig};
pub use layers::{
    attention_pool, bin_of, gcn_layer, gin_layer, global_context_plain, mlp_head, node_histogram,
    ntn, topo_context, Pooled,
};
pub use model::{topo_weights, Bound, Embedding, Encoded, Mtnn, TreeInput};
pub use params::{
    from_checkpoint, init_params, layout, load_model, save_model, to_checkpoint, LayerIndex,
    ModelParams, ParamIndex,
};
