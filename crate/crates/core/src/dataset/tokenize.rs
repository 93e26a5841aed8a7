use std::collections::HashMap;

use crate::gridworld::EgoFrame;
use crate::tokenizer::{
    assemble_prompt, build_codebook, default_text_tokenizer, frame_patches, quantize_frame, PromptInput, PromptShape, Target, TaskKind,
    TokenSequence, UnifiedVocab, VisualCodebook,
};

use super::split::SplitName;
use super::store::{Dataset, Record, Sample};
use super::DatasetError;

/// Fit a codebook on the patches of every train-split frame.
pub fn fit_codebook(ds: &Dataset, n: usize, patch_size: usize, seed: u64) -> Result<VisualCodebook, DatasetError> {
    let mut patches = Vec::new();
    for st in ds.split(SplitName::Train) {
        for f in &st.traj.frames {
            patches.extend(frame_patches(f, patch_size)?);
        }
    }
    if patches.is_empty() {
        return Err(DatasetError::InvalidConfig("the train split has no frames".into()));
    }
    Ok(build_codebook(&patches, n, patch_size, seed)?)
}

/// Turns dataset records into training sequences.
pub struct SampleEncoder {
    pub vocab: UnifiedVocab,
    pub codebook: VisualCodebook,
    pub shape: PromptShape,
}

impl SampleEncoder {
    /// Uses the default text vocabulary.
    pub fn new(codebook: VisualCodebook, k: usize, m: usize, frame_size: u32) -> Self {
        let vocab = UnifiedVocab::new(default_text_tokenizer(), codebook.len());
        let shape = PromptShape { k, m, tokens_per_frame: codebook.tokens_per_frame(frame_size, frame_size) };
        Self { vocab, codebook, shape }
    }

    pub fn frame_ids(&self, frame: &EgoFrame) -> Result<Vec<u32>, DatasetError> {
        Ok(quantize_frame(frame, &self.codebook)?.into_iter().map(|c| self.vocab.visual_id(c)).collect())
    }

    fn encode_with(&self, frames: &[Vec<u32>], rec: &Record) -> Result<TokenSequence, DatasetError> {
        let seq = match &rec.sample {
            Sample::Viz(s) => {
                let context: Vec<Vec<u32>> = s.context.iter().map(|&i| frames[i].clone()).collect();
                let input = PromptInput { kind: TaskKind::Viz, context: &context, goal: &frames[s.goal], prev_instruction: None };
                assemble_prompt(&self.vocab, &input, &Target::Frame(frames[s.target].clone()), &self.shape)?
            }
            Sample::Instr(s) => {
                let context: Vec<Vec<u32>> =
                    [s.initial].iter().chain(&s.intermediates).map(|&i| frames[i].clone()).collect();
                let input = PromptInput { kind: TaskKind::Instr, context: &context, goal: &frames[s.goal], prev_instruction: None };
                let text = self.vocab.text().encode(&s.instruction);
                assemble_prompt(&self.vocab, &input, &Target::Text(text), &self.shape)?
            }
        };
        Ok(seq)
    }

    pub fn encode(&self, ds: &Dataset, rec: &Record) -> Result<TokenSequence, DatasetError> {
        let st = ds.trajectory(rec.sample.traj_id()).ok_or_else(|| DatasetError::UnknownTrajectory(rec.sample.traj_id().into()))?;
        let frames = st.traj.frames.iter().map(|f| self.frame_ids(f)).collect::<Result<Vec<_>, _>>()?;
        self.encode_with(&frames, rec)
    }

    /// Encode every record of `split` whose kind passes `filter`, quantizing
    /// each trajectory once.
    pub fn encode_split(&self, ds: &Dataset, split: SplitName, filter: impl Fn(&Sample) -> bool) -> Result<Vec<TokenSequence>, DatasetError> {
        let mut cache: HashMap<&str, Vec<Vec<u32>>> = HashMap::new();
        let mut out = Vec::new();
        for rec in ds.records_in(split).filter(|r| filter(&r.sample)) {
            let id = rec.sample.traj_id();
            if !cache.contains_key(id) {
                let st = ds.trajectory(id).ok_or_else(|| DatasetError::UnknownTrajectory(id.into()))?;
                let frames = st.traj.frames.iter().map(|f| self.frame_ids(f)).collect::<Result<Vec<_>, _>>()?;
                cache.insert(id, frames);
            }
            out.push(self.encode_with(&cache[id], rec)?);
        }
        Ok(out)
    }
}
