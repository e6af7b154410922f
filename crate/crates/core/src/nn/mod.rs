//! Minimal feed-forward networks: layers, batched forward and backward
//! passes, softmax cross-entropy, and seeded mini-batch SGD training loops.

mod checkpoint;
pub(crate) mod layer;
mod loss;
mod network;
mod train;

pub use checkpoint::{load_network, save_network};
pub use layer::{Layer, ParamGrad};
pub use loss::{cross_entropy, cross_entropy_weighted};
pub use network::{argmax_rows, randomize_biases, ForwardTrace, Network, ParamGrads};
pub use train::{
    balanced_accuracy, learning_rate_at, sgd_step, train_erm, train_plain, train_upweighted,
    worst_group_accuracy, EpochStats, LrSchedule, TrainConfig, TrainOutcome, EVAL_CHUNK,
};
