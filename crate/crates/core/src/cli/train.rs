use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{fit_codebook, read_dataset, GenConfig, Sample, SampleEncoder, SplitName};
use crate::losses::{LossConfig, LossSpace, VisualDistances, VisualObjective};
use crate::model::{
    train, visual_token_accuracy, Checkpoint, EpochStats, LrSchedule, ModelConfig, ModelError, OptimizerKind, SpanConfig, ToyBackend,
    ToyModel, TrainConfig,
};
use crate::tokenizer::{Special, TextTokenizer, UnifiedVocab, VisualCodebook};

use super::gen::DATASET_CONFIG_FILE;
use super::{apply_snapshot, read_json, runtime, usage, write_json, write_snapshot, CliError};

pub const CHECKPOINT_FILE: &str = "model.gvck";
pub const CODEBOOK_FILE: &str = "codebook.gvcb";
pub const VOCAB_FILE: &str = "vocab.json";
pub const META_FILE: &str = "model.json";
pub const LOSS_CSV: &str = "losses.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveArg {
    /// Distance-weighted token discrepancy loss.
    Tdl,
    /// Label-smoothed cross entropy.
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerArg {
    Adamw,
    Sgd,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long, required_unless_present = "config", default_value = ".")]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Total epochs, counting any already done by `--resume`.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Tdl)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adamw)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 20)]
    pub warmup_steps: usize,
    /// Final learning rate as a fraction of `--lr`; 1 keeps it constant.
    #[arg(long, default_value_t = 0.1)]
    pub lr_floor: f32,
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f32,
    #[arg(long, default_value_t = 64)]
    pub codebook_size: usize,
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    /// Train on visualization samples only.
    #[arg(long)]
    pub viz_only: bool,
    /// A previous `train` output directory to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Prompt geometry a trained model was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub k: usize,
    pub m: usize,
    pub frame_size: u32,
    pub patch_size: usize,
    pub codebook_size: usize,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        let visual_objective = match self.objective {
            ObjectiveArg::Tdl => VisualObjective::TokenDiscrepancy,
            ObjectiveArg::Ce => VisualObjective::SmoothedCe,
        };
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            grad_accum: 1,
            seed: self.seed,
            loss: LossConfig { epsilon: self.epsilon, visual_objective, ..LossConfig::default() },
            optimizer: match self.optimizer {
                OptimizerArg::Adamw => OptimizerKind::adamw(),
                OptimizerArg::Sgd => OptimizerKind::sgd(),
            },
            schedule: if self.lr_floor >= 1.0 {
                LrSchedule::Constant
            } else {
                LrSchedule::Cosine { warmup_steps: self.warmup_steps, floor: self.lr_floor }
            },
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
        }
    }
}

/// A model directory loaded back for inference.
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub encoder: SampleEncoder,
    pub meta: ModelMeta,
}

impl TrainedModel {
    pub fn backend(&self) -> ToyBackend {
        ToyBackend::new(self.checkpoint.model.clone(), self.encoder.vocab.clone(), self.encoder.codebook.clone(), self.encoder.shape)
    }
}

pub fn load_trained(dir: &Path) -> Result<TrainedModel, CliError> {
    let meta: ModelMeta = read_json(&dir.join(META_FILE))?;
    let codebook = VisualCodebook::load(&dir.join(CODEBOOK_FILE)).map_err(runtime)?;
    let text = TextTokenizer::load(&dir.join(VOCAB_FILE)).map_err(runtime)?;
    let checkpoint = Checkpoint::load(&dir.join(CHECKPOINT_FILE)).map_err(runtime)?;
    let mut encoder = SampleEncoder::new(codebook, meta.k, meta.m, meta.frame_size);
    encoder.vocab = UnifiedVocab::new(text, encoder.codebook.len());
    if checkpoint.model.config.vocab_size != encoder.vocab.size() {
        return Err(runtime(format!(
            "checkpoint vocabulary {} does not match {} in {}",
            checkpoint.model.config.vocab_size,
            encoder.vocab.size(),
            dir.display()
        )));
    }
    Ok(TrainedModel { checkpoint, encoder, meta })
}

fn loss_csv(trace: &[EpochStats]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9}"));
    let mut s = String::from("epoch,mean_loss,viz_loss,instr_loss\n");
    for e in trace {
        let _ = writeln!(s, "{},{:.9},{},{}", e.epoch, e.mean_loss, opt(e.viz_loss), opt(e.instr_loss));
    }
    s
}

/// Train (or continue training) and write the model directory. Returns the
/// full loss trace.
pub fn cmd_train(args: &TrainArgs) -> Result<Vec<EpochStats>, CliError> {
    let out = args.out.clone();
    let args = apply_snapshot(&args.config, args.clone(), |a: &mut TrainArgs| a.out = out)?;
    let cfg = args.train_config();
    cfg.validate().map_err(usage)?;
    let gen: GenConfig = read_json(&args.data.join(DATASET_CONFIG_FILE))
        .map_err(|e| usage(format!("{} is not a dataset directory: {e}", args.data.display())))?;
    let ds = read_dataset(&args.data).map_err(runtime)?;

    let (mut model, encoder, state, meta) = match &args.resume {
        Some(dir) => {
            let t = load_trained(dir)?;
            let state = t.checkpoint.state.ok_or_else(|| usage(format!("{} holds no optimizer state", dir.display())))?;
            if state.optimizer.kind != cfg.optimizer {
                return Err(usage("--optimizer differs from the checkpoint being resumed"));
            }
            (t.checkpoint.model, t.encoder, Some(state), t.meta)
        }
        None => {
            let codebook = fit_codebook(&ds, args.codebook_size, args.patch_size, args.seed).map_err(runtime)?;
            let encoder = SampleEncoder::new(codebook, gen.k, gen.m, gen.traj.render.size);
            let span = SpanConfig {
                img_start: encoder.vocab.special(Special::ImgStart),
                img_end: encoder.vocab.special(Special::ImgEnd),
                tokens_per_frame: encoder.shape.tokens_per_frame,
            };
            let mc = ModelConfig {
                embed_dim: args.embed_dim,
                n_layers: args.layers,
                n_heads: args.heads,
                ..ModelConfig::toy(encoder.vocab.size(), span)
            };
            let model = ToyModel::new(mc, args.seed).map_err(usage)?;
            let meta = ModelMeta {
                k: gen.k,
                m: gen.m,
                frame_size: gen.traj.render.size,
                patch_size: args.patch_size,
                codebook_size: args.codebook_size,
            };
            (model, encoder, None, meta)
        }
    };

    let viz_only = args.viz_only;
    let data = encoder
        .encode_split(&ds, SplitName::Train, |s| !viz_only || matches!(s, Sample::Viz(_)))
        .map_err(runtime)?;
    let space = LossSpace::from_vocab(&encoder.vocab);
    let dist = VisualDistances::from_codebook(&encoder.codebook);
    let state = train(&mut model, &data, &space, &dist, &cfg, state, |s| {
        eprintln!("epoch {}: loss {:.5}", s.epoch, s.mean_loss);
    })
    .map_err(|e| match e {
        ModelError::InvalidConfig(_) | ModelError::ContextOverflow { .. } => usage(e),
        other => runtime(other),
    })?;

    fs::create_dir_all(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let val: Vec<_> = encoder.encode_split(&ds, SplitName::ValUnseen, |s| matches!(s, Sample::Viz(_))).map_err(runtime)?;
    let accuracy = if val.is_empty() {
        None
    } else {
        let (hit, total) = visual_token_accuracy(&model, &val, &space).map_err(runtime)?;
        Some(hit as f64 / total.max(1) as f64)
    };
    let trace = state.trace.clone();
    Checkpoint { model, state: Some(state) }.save(&args.out.join(CHECKPOINT_FILE)).map_err(runtime)?;
    encoder.codebook.save(&args.out.join(CODEBOOK_FILE)).map_err(runtime)?;
    encoder.vocab.text().save(&args.out.join(VOCAB_FILE)).map_err(runtime)?;
    write_json(&args.out.join(META_FILE), &meta)?;
    fs::write(args.out.join(LOSS_CSV), loss_csv(&trace)).map_err(runtime)?;
    write_json(
        &args.out.join("train_report.json"),
        &serde_json::json!({ "train_sequences": data.len(), "val_unseen_visual_accuracy": accuracy, "epochs": trace.len() }),
    )?;
    write_snapshot(&args.out, &args)?;
    Ok(trace)
}
