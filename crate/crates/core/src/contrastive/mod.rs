//! Heads trained over frozen embeddings: dropout-pair NT-Xent, curated-triplet
//! InfoNCE, and weighted multi-head classification with rebalancing.

mod head;
mod loss;
mod rebalance;
mod train;
mod triplets;

use thiserror::Error;

pub use head::{
    read_model_file, ClassifierHead, Dense, DropoutMask, HeadKind, HeadModel, HeadOutput, HeadSpec,
    ModelFile,
};
pub use loss::{
    info_nce_loss, nt_xent_loss, weighted_multihead_ce, HeadBatch, LossGrad, MultiHeadLoss,
    NEGATIVES_PER_ANCHOR,
};
pub use rebalance::{
    inverse_frequency_weights, rebalance, LabelAttribute, RebalanceConfig, RebalanceMode,
    RebalancedDataset, Sample, DEFAULT_JITTER_FRACTION, DEFAULT_MIN_SAMPLES,
};
pub use train::{
    history_csv, split_ids, train_head, EpochRecord, Regime, Split, TrainOutcome, TrainingConfig,
    TrainingData,
};
pub use triplets::{sample_triplets, TripletRecord, TripletSet};

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector {index} has zero norm; cosine similarity is undefined")]
    ZeroNorm { index: usize },
    #[error("item {0} projects to the zero vector; cosine similarity is undefined")]
    ZeroProjection(u64),
    #[error("unknown classification head {0:?}")]
    UnknownHead(String),
    #[error("label {label:?} is outside the label set of head {head:?}")]
    UnknownLabel { head: String, label: String },
    #[error("attribute {0:?} has no usable labels")]
    NoLabels(String),
    #[error("invalid triplet for anchor {anchor}: {message}")]
    InvalidTriplet { anchor: u64, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no embedding for id {0}")]
    MissingEmbedding(u64),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("training data is empty")]
    EmptyData,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
