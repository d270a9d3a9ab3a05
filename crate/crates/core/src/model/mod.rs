//! Toy networks, checkpoints and encoder transfer.

pub mod checkpoint;
pub mod network;
pub mod transfer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use network::{
    build_classifier, build_network, build_segmenter, Head, Network, NetworkSpec, ParamSet, DEFAULT_WIDTH,
};
pub use transfer::{adapt_input_stem, transfer_encoder};
