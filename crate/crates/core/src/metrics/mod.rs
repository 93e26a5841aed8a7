//! Text and image evaluation metrics.

mod image;
mod text;

pub use image::{embed_cosine, luma, mse, psnr, psnr_from_mse, ssim, EmbedTarget, Embedder, PixelEmbedder};
pub use text::{align_exact, bleu4, cider, corpus_bleu4, meteor_lite, rouge_l, CiderResult};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("at least one reference is required")]
    NoReferences,
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("embedding has zero or non-finite norm")]
    ZeroNormEmbedding,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no inputs")]
    Empty,
}
