//! The training-dependent criteria. These share generated corpora and run
//! once before the report is printed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use govig::cli::{self, EvalReport};
use govig::dataset::{fit_codebook, generate_dataset, Dataset, GenConfig, Sample, SampleEncoder, SplitName};
use govig::losses::{LossSpace, VisualDistances, VisualObjective};
use govig::metrics::ssim;
use govig::model::{
    train, LrSchedule, ModelBackend, ModelConfig, OptimizerKind, SpanConfig, ToyBackend, ToyModel, TrainConfig,
};
use govig::tokenizer::Special;

use super::{outcome, Outcome};

const WORLDS: usize = 20;
const TRAJECTORIES: usize = 200;
const FRAME: u32 = 32;
const CODEBOOK: usize = 64;
const PRETRAIN_EPOCHS: usize = 4;
const FINETUNE_EPOCHS: usize = 2;
const FINETUNE_LR: f32 = 1e-3;
const CONTEXT_EPOCHS: usize = 4;
const ROLLOUT_STEPS: usize = 12;
const SEEDS: [u64; 3] = [1, 2, 3];

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("govig").chain(list.iter().copied()).map(String::from).collect()
}

fn cli(list: &[&str]) -> Result<(), String> {
    match cli::run(args(list)) {
        0 => Ok(()),
        code => Err(format!("govig {} exited {code}", list.join(" "))),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub struct ContextArm {
    pub k: usize,
    pub accuracy: f64,
    pub train_seconds: f64,
    pub trajectories: usize,
}

pub struct ObjectiveSeed {
    pub seed: u64,
    pub tdl: f64,
    pub ce: f64,
    pub predictions: usize,
}

pub struct ToyExperiments {
    context: Result<(Vec<ContextArm>, Vec<EvalReport>, String), String>,
    objective: Result<Vec<ObjectiveSeed>, String>,
}

impl ToyExperiments {
    pub fn run() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let context = context_runs(tmp.path());
        let objective = SEEDS.iter().map(|&s| objective_seed(s)).collect();
        Self { context, objective }
    }

    pub fn efficacy(&self) -> Outcome {
        match &self.context {
            Err(e) => outcome(false, e.clone()),
            Ok((arms, _, _)) => {
                let a = arms.iter().find(|a| a.k == 2).unwrap();
                outcome(
                    a.trajectories >= 200 && a.accuracy >= 0.60 && a.train_seconds < 1800.0,
                    format!(
                        "k=2 model from `govig train`: val_unseen visual accuracy {:.3} (chance {:.4}), {} trajectories, trained in {:.0}s",
                        a.accuracy,
                        1.0 / CODEBOOK as f64,
                        a.trajectories,
                        a.train_seconds
                    ),
                )
            }
        }
    }

    pub fn objective_direction(&self) -> Outcome {
        match &self.objective {
            Err(e) => outcome(false, e.clone()),
            Ok(seeds) => {
                let wins = seeds.iter().filter(|s| s.tdl > s.ce).count();
                let enough = seeds.iter().all(|s| s.predictions >= 200);
                let per_seed: Vec<String> =
                    seeds.iter().map(|s| format!("seed {}: {:.4} vs {:.4}", s.seed, s.tdl, s.ce)).collect();
                outcome(
                    enough && wins * 2 > seeds.len(),
                    format!(
                        "mean SSIM token discrepancy vs smoothed CE over {} predictions, {wins}/{} seeds favour token discrepancy ({})",
                        seeds[0].predictions,
                        seeds.len(),
                        per_seed.join(", ")
                    ),
                )
            }
        }
    }

    pub fn context_direction(&self) -> Outcome {
        match &self.context {
            Err(e) => outcome(false, e.clone()),
            Ok((_, reports, table)) => {
                let get = |label: &str| {
                    let r = reports.iter().find(|r| r.label == label).unwrap();
                    (r.aggregates.ssim.unwrap_or(f64::NAN), r.per_sample.iter().map(|s| s.predicted_frames).sum::<usize>())
                };
                let ((s1, n1), (s2, n2)) = (get("k1"), get("k2"));
                println!("{}", table.trim_end());
                outcome(s2 >= s1, format!("mean predicted-frame SSIM k=2 {s2:.4} ({n2} frames) vs k=1 {s1:.4} ({n1} frames)"))
            }
        }
    }
}

/// Both context sizes through the command line: gen, train, infer on
/// val_unseen, then one eval over the two runs.
fn context_runs(root: &Path) -> Result<(Vec<ContextArm>, Vec<EvalReport>, String), String> {
    let mut arms = Vec::new();
    let mut runs: Vec<PathBuf> = Vec::new();
    for &k in &[1usize, 2] {
        let (data, model, infer) = (root.join(format!("data{k}")), root.join(format!("model{k}")), root.join(format!("infer{k}")));
        let (ks, worlds, trajs, frame) = (k.to_string(), WORLDS.to_string(), TRAJECTORIES.to_string(), FRAME.to_string());
        cli(&["gen", "--out", p(&data), "--worlds", &worlds, "--trajs", &trajs, "--seed", "1", "--k", &ks, "--frame-size", &frame])?;
        let t = Instant::now();
        let epochs = CONTEXT_EPOCHS.to_string();
        cli(&["train", "--data", p(&data), "--out", p(&model), "--objective", "ce", "--epochs", &epochs, "--seed", "1"])?;
        let train_seconds = t.elapsed().as_secs_f64();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(model.join("train_report.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let steps = ROLLOUT_STEPS.to_string();
        cli(&["infer", "--data", p(&data), "--out", p(&infer), "--model", p(&model), "--split", "val_unseen", "--max-steps", &steps])?;
        arms.push(ContextArm {
            k,
            accuracy: report["val_unseen_visual_accuracy"].as_f64().unwrap_or(f64::NAN),
            train_seconds,
            trajectories: TRAJECTORIES,
        });
        runs.push(infer);
    }
    let eval = cli::EvalArgs {
        results: runs,
        data: root.join("data2"),
        out: root.join("eval"),
        labels: vec!["k1".into(), "k2".into()],
        config: None,
    };
    let (reports, table) = cli::cmd_eval(&eval).map_err(|e| e.to_string())?;
    Ok((arms, reports, table))
}

struct Corpus {
    ds: Dataset,
    enc: SampleEncoder,
}

fn corpus() -> Corpus {
    let gen = GenConfig { worlds: WORLDS, trajs: TRAJECTORIES, seed: 1, ..GenConfig::default() };
    let ds = generate_dataset(&gen).unwrap();
    let cb = fit_codebook(&ds, CODEBOOK, 4, 0).unwrap();
    let enc = SampleEncoder::new(cb, gen.k, gen.m, FRAME);
    Corpus { ds, enc }
}

/// Mean SSIM of single-step predictions on every val_unseen window.
fn val_unseen_ssim(c: &Corpus, model: &ToyModel) -> (f64, usize) {
    let k = c.enc.shape.k;
    let backend = ToyBackend::new(model.clone(), c.enc.vocab.clone(), c.enc.codebook.clone(), c.enc.shape);
    let windows: Vec<_> = c.ds.split(SplitName::ValUnseen).flat_map(|st| (0..st.traj.len() - k).map(move |s| (st, s))).collect();
    let scores: Vec<f64> = windows
        .par_iter()
        .map(|(st, s)| {
            let f = &st.traj.frames;
            let pred = backend.predict_frame(&f[*s..*s + k], st.traj.goal_frame()).unwrap();
            ssim(&pred, &f[s + k]).unwrap()
        })
        .collect();
    (scores.iter().sum::<f64>() / scores.len() as f64, scores.len())
}

/// Smoothed-CE warm start, then equal fine-tuning budgets under each
/// visual objective from the same weights.
fn objective_seed(seed: u64) -> Result<ObjectiveSeed, String> {
    thread_local! { static CORPUS: Corpus = corpus(); }
    CORPUS.with(|c| {
        let err = |e: govig::model::ModelError| e.to_string();
        let data = c.enc.encode_split(&c.ds, SplitName::Train, |s| matches!(s, Sample::Viz(_))).map_err(|e| e.to_string())?;
        let span = SpanConfig {
            img_start: c.enc.vocab.special(Special::ImgStart),
            img_end: c.enc.vocab.special(Special::ImgEnd),
            tokens_per_frame: c.enc.shape.tokens_per_frame,
        };
        let space = LossSpace::from_vocab(&c.enc.vocab);
        let dist = VisualDistances::from_codebook(&c.enc.codebook);
        let mut model = ToyModel::new(ModelConfig::toy(c.enc.vocab.size(), span), seed).map_err(err)?;
        let mut pre = TrainConfig {
            epochs: PRETRAIN_EPOCHS,
            learning_rate: 3e-3,
            batch_size: 16,
            seed,
            optimizer: OptimizerKind::adamw(),
            schedule: LrSchedule::Cosine { warmup_steps: 20, floor: 0.1 },
            ..TrainConfig::default()
        };
        pre.loss.visual_objective = VisualObjective::SmoothedCe;
        train(&mut model, &data, &space, &dist, &pre, None, |_| {}).map_err(err)?;
        let arm = |objective| -> Result<(f64, usize), String> {
            let mut m = model.clone();
            let mut cfg = TrainConfig {
                epochs: FINETUNE_EPOCHS,
                learning_rate: FINETUNE_LR,
                seed: seed + 100,
                schedule: LrSchedule::Constant,
                ..pre.clone()
            };
            cfg.loss.visual_objective = objective;
            train(&mut m, &data, &space, &dist, &cfg, None, |_| {}).map_err(err)?;
            Ok(val_unseen_ssim(c, &m))
        };
        let (tdl, predictions) = arm(VisualObjective::TokenDiscrepancy)?;
        let (ce, _) = arm(VisualObjective::SmoothedCe)?;
        Ok(ObjectiveSeed { seed, tdl, ce, predictions })
    })
}
