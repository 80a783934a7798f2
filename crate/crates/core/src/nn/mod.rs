//! From-scratch feedforward Q-network: forward/backward, Adam and the
//! compact weight blob exchanged between sink and device.

mod adam;
mod blob;
mod matrix;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use blob::{deserialize, serialize, BlobError, FORMAT_VERSION, MAGIC, MAX_BLOB_BYTES};
pub use matrix::Matrix;
pub use network::{
    BatchNorm, Dense, ForwardCache, Gradients, Mode, QNetwork, BN_EPS, BN_MOMENTUM, DEFAULT_DROPOUT,
    DEFAULT_LAYER_DIMS,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} columns, network expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training-mode forward needs at least 2 rows for batch statistics, got {0}")]
    BatchTooSmall(usize),
    #[error("forward cache was produced by different parameters")]
    CacheMismatch,
    #[error("loss gradient has shape {got:?}, expected {expected:?}")]
    GradientShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid layer dims {0:?}")]
    InvalidArchitecture(Vec<usize>),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropout(f64),
}

/// The simulator's Q-network for a given seed.
pub fn init_network(seed: u64) -> QNetwork {
    QNetwork::new(&DEFAULT_LAYER_DIMS, DEFAULT_DROPOUT, seed).expect("default architecture is valid")
}
