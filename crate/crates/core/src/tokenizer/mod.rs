//! VQ image tokenization, word-level text tokenization, the unified id
//! space, and prompt assembly.

mod codebook;
mod prompt;
mod text;
mod vocab;

pub use codebook::{build_codebook, dequantize, frame_patches, quantize_frame, VisualCodebook};
pub use prompt::{
    assemble_prefix, assemble_prompt, prompt_words, Label, PromptInput, PromptShape, Target, TaskKind, TokenSequence,
    INSTR_TAG, PREV_TAG, VIZ_TAG,
};
pub use text::{normalize_words, TextTokenizer, UNK};
pub use vocab::{Special, TokenKind, UnifiedVocab};

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("need at least {need} distinct patches, have {have}")]
    TooFewPatches { have: usize, need: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("token id {0} is not valid here")]
    BadTokenId(u32),
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("got {got} context frames, expected {expected}")]
    ContextSizeMismatch { got: usize, expected: String },
    #[error("target kind mismatch: {0}")]
    TargetKindMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The text vocabulary covering every instruction template word, prompt tag
/// and basic punctuation.
pub fn default_text_tokenizer() -> TextTokenizer {
    let mut words: Vec<&str> = vec![".", ","];
    words.extend(crate::gridworld::instruction_words());
    words.extend(prompt_words());
    TextTokenizer::new(words)
}
