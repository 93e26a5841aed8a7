//! Sample extraction, split assignment and the on-disk dataset format.

mod corpus;
mod samples;
mod split;
mod store;
mod tokenize;

pub use corpus::{extract_records, generate_dataset, GenConfig};
pub use samples::{extract_instr_samples, extract_viz_samples, InstrSample, VizSample};
pub use split::{check_split_laws, split_dataset, DatasetSplit, SplitName, SplitRatios};
pub use store::{
    frame_ref, read_dataset, write_dataset, Dataset, Record, Sample, SplitTrajectory, MANIFEST_FILE, SCHEMA_VERSION, TRAJECTORIES_FILE,
};
pub use tokenize::{fit_codebook, SampleEncoder};

use crate::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("trajectory {traj_id} has {len} frames, need at least {need}")]
    TrajectoryTooShort { traj_id: String, len: usize, need: usize },
    #[error("bad split ratios: {0}")]
    BadRatios(String),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{file}:{line}: corrupt manifest: {reason}")]
    ManifestCorrupt { file: String, line: usize, reason: String },
    #[error("unknown trajectory {0}")]
    UnknownTrajectory(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}
