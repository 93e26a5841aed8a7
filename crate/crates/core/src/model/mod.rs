//! Model backends and the toy transformer's training loop.

mod backend;
mod checkpoint;
mod linalg;
mod optim;
mod train;
mod transformer;

pub use backend::{BackendError, ModelBackend, OracleBackend, RemoteBackend, ToyBackend, REMOTE_URL_ENV};
pub use checkpoint::Checkpoint;
pub use optim::{Optimizer, OptimizerKind};
pub use train::{
    epoch_order, evaluate_loss, sample_loss_and_grad, scored_rows, train, visual_token_accuracy, EpochStats, LrSchedule,
    TrainConfig, TrainState,
};
pub use transformer::{ForwardCache, KvCache, Layout, ModelConfig, SpanConfig, SpanTracker, ToyModel};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("sequence of {len} tokens exceeds the context limit {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("token id {0} is outside the vocabulary")]
    BadToken(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, sample {sample}: {diagnostics}")]
    NonFiniteLoss { epoch: usize, sample: usize, diagnostics: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
