//! Fit a patch codebook, quantize a frame, rebuild it, and assemble a
//! visualization prompt from the resulting token ids.

use govig::gridworld::{build_world, sample_trajectories, TrajConfig, WorldSpec};
use govig::metrics::{psnr, ssim};
use govig::tokenizer::{
    build_codebook, default_text_tokenizer, dequantize, frame_patches, quantize_frame, assemble_prompt, PromptInput, PromptShape, Target,
    TaskKind, UnifiedVocab,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = build_world(&WorldSpec::new(16, 16, 3, 3, 21))?;
    let trajs = sample_trajectories(&world, 6, &TrajConfig::default(), 0)?;
    let mut patches = Vec::new();
    for t in &trajs {
        for f in &t.frames {
            patches.extend(frame_patches(f, 4)?);
        }
    }
    let cb = build_codebook(&patches, 64, 4, 0)?;
    let frame = &trajs[0].frames[0];
    let codes = quantize_frame(frame, &cb)?;
    let rebuilt = dequantize(&codes, &cb, frame.width(), frame.height())?;
    println!("{} patches -> {} codes per frame", patches.len(), codes.len());
    println!("reconstruction: SSIM {:.4}, PSNR {:.2} dB", ssim(frame, &rebuilt)?, psnr(frame, &rebuilt)?);

    let vocab = UnifiedVocab::new(default_text_tokenizer(), cb.len());
    let ids = |f| -> Result<Vec<u32>, Box<dyn std::error::Error>> {
        Ok(quantize_frame(f, &cb)?.into_iter().map(|c| vocab.visual_id(c)).collect())
    };
    let t = &trajs[0];
    let context = vec![ids(&t.frames[0])?, ids(&t.frames[1])?];
    let shape = PromptShape { k: 2, m: 3, tokens_per_frame: codes.len() };
    let input = PromptInput { kind: TaskKind::Viz, context: &context, goal: &ids(t.goal_frame())?, prev_instruction: None };
    let seq = assemble_prompt(&vocab, &input, &Target::Frame(ids(&t.frames[2])?), &shape)?;
    println!("vocabulary: {} text + {} visual + specials = {}", vocab.n_text(), vocab.n_visual(), vocab.size());
    println!("prompt: {} tokens, {} of them supervised", seq.len(), seq.target_count());
    Ok(())
}
