//! Synthetic three-modality data, small feed-forward encoders, and the
//! alignment training loop that contrasts volume-based training against
//! the pairwise-cosine anchor baseline.

pub mod dataset;
pub mod mlp;
pub mod train;

pub use dataset::{generate_dataset, DatasetConfig, SyntheticSample};
pub use mlp::{AdamW, Mlp, MlpGrads};
pub use train::{
    encode, evaluate_retrieval, mean_matched_cosine, train_alignment, AlignConfig, AlignOutcome,
    EncoderParams, Objective, RetrievalReport, TrainState, TripletEmbedding,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step}: loss {loss}")]
    DivergenceDetected { step: u64, loss: f64 },
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}
