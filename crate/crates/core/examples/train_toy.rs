//! Train the toy transformer on a generated corpus and report next-token
//! accuracy on held-out worlds.
//!
//! cargo run --release --example train_toy -- [trajectories] [epochs] [lr] [viz]

use std::time::Instant;

use govig::dataset::{fit_codebook, generate_dataset, GenConfig, Sample, SampleEncoder, SplitName};
use govig::losses::{LossSpace, VisualDistances};
use govig::model::{train, visual_token_accuracy, LrSchedule, ModelConfig, OptimizerKind, SpanConfig, ToyModel, TrainConfig};
use govig::tokenizer::Special;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trajs: usize = args.next().map_or(Ok(200), |a| a.parse())?;
    let epochs: usize = args.next().map_or(Ok(4), |a| a.parse())?;
    let lr: f32 = args.next().map_or(Ok(3e-3), |a| a.parse())?;
    let viz_only = args.next().is_some_and(|a| a == "viz");

    let t0 = Instant::now();
    let gen = GenConfig { worlds: 20, trajs, seed: 1, ..GenConfig::default() };
    let ds = generate_dataset(&gen)?;
    let codebook = fit_codebook(&ds, 64, 4, 0)?;
    let enc = SampleEncoder::new(codebook, gen.k, gen.m, gen.traj.render.size);
    let train_set = enc.encode_split(&ds, SplitName::Train, |s| !viz_only || matches!(s, Sample::Viz(_)))?;
    let val = enc.encode_split(&ds, SplitName::ValUnseen, |s| matches!(s, Sample::Viz(_)))?;
    println!("{} train sequences, {} val_unseen viz sequences, built in {:.1?}", train_set.len(), val.len(), t0.elapsed());

    let span = SpanConfig {
        img_start: enc.vocab.special(Special::ImgStart),
        img_end: enc.vocab.special(Special::ImgEnd),
        tokens_per_frame: enc.shape.tokens_per_frame,
    };
    let mut model = ToyModel::new(ModelConfig::toy(enc.vocab.size(), span), 0)?;
    let space = LossSpace::from_vocab(&enc.vocab);
    let dist = VisualDistances::from_codebook(&enc.codebook);
    let cfg = TrainConfig {
        epochs,
        learning_rate: lr,
        batch_size: 16,
        optimizer: OptimizerKind::adamw(),
        schedule: LrSchedule::Cosine { warmup_steps: 20, floor: 0.1 },
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    train(&mut model, &train_set, &space, &dist, &cfg, None, |s| {
        println!("epoch {}: loss {:.4} ({:.1?})", s.epoch, s.mean_loss, t1.elapsed());
    })?;
    let (hit, total) = visual_token_accuracy(&model, &val, &space)?;
    println!("val_unseen next-visual-token accuracy {:.3} ({hit}/{total})", hit as f64 / total as f64);
    Ok(())
}
