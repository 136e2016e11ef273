//! Dataset pairing, training, evaluation, timing and analysis.

mod attention;
mod data;
mod eval;
mod mds;
mod train;

pub use attention::{attention_csv, export_attention, AttentionRow};
pub use data::{make_pairs, split_trees, Pair};
pub use eval::{
    benchmark, evaluate, mse, predict_pairs, sample_pairs, BenchReport, EvalReport,
};
pub use mds::{mds, symmetric_eigen, MdsResult};
pub use train::{batch_loss, train, EpochStats, TrainConfig, TrainResult};
