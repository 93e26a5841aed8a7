//! Prompt layouts and input-label masking.
//!
//! ```text
//! BOS <task tag> [IMG_START v.. IMG_END]* [<prev tag> prev..] SEP target.. EOS
//! ```
//!
//! Labels follow the usual causal-LM convention: `labels[i]` holds the token
//! the model should produce at position `i`, so the logits row at `i - 1` is
//! scored against it. Everything before the target is masked.

use serde::{Deserialize, Serialize};

use super::vocab::{Special, TokenKind, UnifiedVocab};
use super::TokenizerError;

pub const VIZ_TAG: &str = "predict the next observation";
pub const INSTR_TAG: &str = "describe the route";
pub const PREV_TAG: &str = "previous instruction";

/// Words the prompt tags contribute to the text vocabulary.
pub fn prompt_words() -> Vec<&'static str> {
    [VIZ_TAG, INSTR_TAG, PREV_TAG].iter().flat_map(|t| t.split(' ')).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Viz,
    Instr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Masked,
    Target(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub kind: TaskKind,
    pub ids: Vec<u32>,
    pub labels: Vec<Label>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn target_count(&self) -> usize {
        self.labels.iter().filter(|l| matches!(l, Label::Target(_))).count()
    }
}

/// What the model should produce after SEP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Frame(Vec<u32>),
    Text(Vec<u32>),
}

/// Frame and instruction inputs for one prompt. `context` holds the k
/// preceding frames for Viz, or the initial frame plus intermediates for
/// Instr. Frames are visual token ids in the unified space.
#[derive(Clone, Debug)]
pub struct PromptInput<'a> {
    pub kind: TaskKind,
    pub context: &'a [Vec<u32>],
    pub goal: &'a [u32],
    pub prev_instruction: Option<&'a [u32]>,
}

/// Layout limits: exact `k` for Viz, at most `m` frames (initial plus
/// `m - 1` intermediates) for Instr, and the token count of one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptShape {
    pub k: usize,
    pub m: usize,
    pub tokens_per_frame: usize,
}

fn push_text(vocab: &UnifiedVocab, out: &mut Vec<u32>, text: &str) {
    out.extend(vocab.text().encode(text));
}

fn check_frame(vocab: &UnifiedVocab, frame: &[u32], shape: &PromptShape) -> Result<(), TokenizerError> {
    if frame.len() != shape.tokens_per_frame {
        return Err(TokenizerError::DimensionMismatch(format!(
            "frame span has {} tokens, expected {}",
            frame.len(),
            shape.tokens_per_frame
        )));
    }
    match frame.iter().find(|&&id| vocab.kind(id) != Some(TokenKind::Visual)) {
        Some(&bad) => Err(TokenizerError::BadTokenId(bad)),
        None => Ok(()),
    }
}

/// Ids through SEP: the part of a prompt the model conditions on.
pub fn assemble_prefix(vocab: &UnifiedVocab, input: &PromptInput<'_>, shape: &PromptShape) -> Result<Vec<u32>, TokenizerError> {
    let n_ctx = input.context.len();
    match input.kind {
        TaskKind::Viz if n_ctx != shape.k => {
            return Err(TokenizerError::ContextSizeMismatch { got: n_ctx, expected: format!("exactly {}", shape.k) })
        }
        TaskKind::Instr if n_ctx == 0 || n_ctx > shape.m => {
            return Err(TokenizerError::ContextSizeMismatch { got: n_ctx, expected: format!("1..={}", shape.m) })
        }
        _ => {}
    }
    if input.kind == TaskKind::Viz && input.prev_instruction.is_some() {
        return Err(TokenizerError::TargetKindMismatch("a previous instruction only applies to Instr prompts".into()));
    }
    let mut ids = vec![vocab.bos()];
    push_text(vocab, &mut ids, if input.kind == TaskKind::Viz { VIZ_TAG } else { INSTR_TAG });
    for frame in input.context.iter().map(Vec::as_slice).chain([input.goal]) {
        check_frame(vocab, frame, shape)?;
        ids.push(vocab.special(Special::ImgStart));
        ids.extend_from_slice(frame);
        ids.push(vocab.special(Special::ImgEnd));
    }
    if let Some(prev) = input.prev_instruction.filter(|p| !p.is_empty()) {
        if let Some(&bad) = prev.iter().find(|&&id| vocab.kind(id) != Some(TokenKind::Text)) {
            return Err(TokenizerError::BadTokenId(bad));
        }
        push_text(vocab, &mut ids, PREV_TAG);
        ids.extend_from_slice(prev);
    }
    ids.push(vocab.special(Special::Sep));
    Ok(ids)
}

/// A full training sample with its label stream.
pub fn assemble_prompt(
    vocab: &UnifiedVocab,
    input: &PromptInput<'_>,
    target: &Target,
    shape: &PromptShape,
) -> Result<TokenSequence, TokenizerError> {
    let target_ids = match (input.kind, target) {
        (TaskKind::Viz, Target::Frame(f)) => {
            check_frame(vocab, f, shape)?;
            f
        }
        (TaskKind::Instr, Target::Text(t)) => {
            if let Some(&bad) = t.iter().find(|&&id| vocab.kind(id) != Some(TokenKind::Text)) {
                return Err(TokenizerError::BadTokenId(bad));
            }
            t
        }
        (kind, _) => return Err(TokenizerError::TargetKindMismatch(format!("{kind:?} prompt with the wrong target kind"))),
    };
    let mut ids = assemble_prefix(vocab, input, shape)?;
    let mut labels = vec![Label::Masked; ids.len()];
    for &id in target_ids.iter().chain([&vocab.eos()]) {
        ids.push(id);
        labels.push(Label::Target(id));
    }
    Ok(TokenSequence { kind: input.kind, ids, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::TextTokenizer;
    use proptest::prelude::*;

    fn vocab() -> UnifiedVocab {
        let mut words = prompt_words();
        words.extend(["go", "straight", "turn", "left"]);
        UnifiedVocab::new(TextTokenizer::new(words), 64)
    }

    fn frame(v: &UnifiedVocab, seed: u32) -> Vec<u32> {
        (0..64).map(|i| v.visual_id(((i * 7 + seed) % 64) as usize)).collect()
    }

    const SHAPE: PromptShape = PromptShape { k: 2, m: 3, tokens_per_frame: 64 };

    #[test]
    fn viz_layout() {
        let v = vocab();
        let ctx = vec![frame(&v, 0), frame(&v, 1)];
        let goal = frame(&v, 2);
        let input = PromptInput { kind: TaskKind::Viz, context: &ctx, goal: &goal, prev_instruction: None };
        let seq = assemble_prompt(&v, &input, &Target::Frame(frame(&v, 3)), &SHAPE).unwrap();
        let starts = seq.ids.iter().filter(|&&i| i == v.special(Special::ImgStart)).count();
        assert_eq!(starts, 3);
        assert_eq!(seq.target_count(), 65);
        assert_eq!(seq.len(), 1 + 4 + 3 * 66 + 1 + 65);
        assert_eq!(*seq.labels.last().unwrap(), Label::Target(v.eos()));
    }

    #[test]
    fn empty_prev_instruction_emits_nothing() {
        let v = vocab();
        let ctx = vec![frame(&v, 0)];
        let goal = frame(&v, 2);
        let with_empty = PromptInput { kind: TaskKind::Instr, context: &ctx, goal: &goal, prev_instruction: Some(&[]) };
        let without = PromptInput { prev_instruction: None, ..with_empty.clone() };
        assert_eq!(assemble_prefix(&v, &with_empty, &SHAPE).unwrap(), assemble_prefix(&v, &without, &SHAPE).unwrap());
        let prev = v.text().encode("turn left");
        let with_prev = PromptInput { prev_instruction: Some(&prev), ..without.clone() };
        let p = assemble_prefix(&v, &with_prev, &SHAPE).unwrap();
        assert_eq!(p.len(), assemble_prefix(&v, &without, &SHAPE).unwrap().len() + 2 + 2);
    }

    #[test]
    fn layout_errors() {
        let v = vocab();
        let goal = frame(&v, 2);
        let ctx = vec![frame(&v, 0)];
        let viz = PromptInput { kind: TaskKind::Viz, context: &ctx, goal: &goal, prev_instruction: None };
        assert!(matches!(assemble_prefix(&v, &viz, &SHAPE), Err(TokenizerError::ContextSizeMismatch { .. })));
        let many = vec![frame(&v, 0); 4];
        let instr = PromptInput { kind: TaskKind::Instr, context: &many, goal: &goal, prev_instruction: None };
        assert!(matches!(assemble_prefix(&v, &instr, &SHAPE), Err(TokenizerError::ContextSizeMismatch { .. })));
        let instr = PromptInput { context: &ctx, ..instr };
        assert!(matches!(
            assemble_prompt(&v, &instr, &Target::Frame(goal.clone()), &SHAPE),
            Err(TokenizerError::TargetKindMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn unmasked_labels_form_target_suffix(n_ctx in 1usize..=3, text_len in 0usize..10, prev_len in 0usize..5, seed in 0u32..64) {
            let v = vocab();
            let ctx: Vec<Vec<u32>> = (0..n_ctx as u32).map(|i| frame(&v, seed + i)).collect();
            let goal = frame(&v, seed);
            let text: Vec<u32> = (0..text_len as u32).map(|i| (i * 3 + seed) % v.n_text() as u32).collect();
            let prev: Vec<u32> = (0..prev_len as u32).map(|i| (i + seed) % v.n_text() as u32).collect();
            let input = PromptInput { kind: TaskKind::Instr, context: &ctx, goal: &goal, prev_instruction: Some(&prev) };
            let seq = assemble_prompt(&v, &input, &Target::Text(text.clone()), &SHAPE).unwrap();
            prop_assert_eq!(seq.ids.len(), seq.labels.len());
            prop_assert_eq!(seq.target_count(), text_len + 1);
            let first = seq.labels.iter().position(|l| *l != Label::Masked).unwrap();
            prop_assert!(seq.labels[first..].iter().all(|l| *l != Label::Masked));
            prop_assert_eq!(seq.ids[first - 1], v.special(Special::Sep));
            for id in &seq.ids {
                prop_assert!(v.kind(*id).is_some());
            }
        }
    }
}
