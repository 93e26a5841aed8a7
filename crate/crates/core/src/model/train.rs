use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::losses::{masked_sequence_loss, LossConfig, LossSpace, VisualDistances};
use crate::tokenizer::{Label, TaskKind, TokenSequence};

use super::optim::{Optimizer, OptimizerKind};
use super::transformer::ToyModel;
use super::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup, then cosine decay to `floor * lr` at the last step.
    Cosine { warmup_steps: usize, floor: f32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Global gradient-norm clip applied before each update.
    #[serde(default)]
    pub clip_norm: Option<f32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 8,
            grad_accum: 1,
            seed: 0,
            loss: LossConfig::default(),
            optimizer: OptimizerKind::sgd(),
            schedule: LrSchedule::Constant,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    /// AdamW at 2e-4 for 20 epochs, the usual large-model fine-tuning recipe.
    pub fn reference_preset() -> Self {
        Self { epochs: 20, learning_rate: 2e-4, optimizer: OptimizerKind::adamw(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 || self.grad_accum == 0 {
            return Err(ModelError::InvalidConfig("epochs, batch_size and grad_accum must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.loss.epsilon) {
            return Err(ModelError::InvalidConfig(format!("epsilon {} must lie in [0, 1)", self.loss.epsilon)));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize, total: usize) -> f32 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { warmup_steps, floor } => {
                if step < warmup_steps {
                    return self.learning_rate * (step + 1) as f32 / warmup_steps as f32;
                }
                let span = total.saturating_sub(warmup_steps).max(1) as f32;
                let progress = ((step - warmup_steps) as f32 / span).min(1.0);
                let cos = 0.5 * (1.0 + (std::f32::consts::PI * progress).cos());
                self.learning_rate * (floor + (1.0 - floor) * cos)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, measured before each update.
    pub mean_loss: f64,
    pub viz_loss: Option<f64>,
    pub instr_loss: Option<f64>,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub optimizer: Optimizer,
    pub epochs_done: usize,
    pub trace: Vec<EpochStats>,
}

/// Sample order for one epoch: shuffled Viz and Instr lists merged
/// round-robin.
pub fn epoch_order(data: &[TokenSequence], seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(epoch as u64));
    let mut viz: Vec<usize> = (0..data.len()).filter(|&i| data[i].kind == TaskKind::Viz).collect();
    let mut instr: Vec<usize> = (0..data.len()).filter(|&i| data[i].kind == TaskKind::Instr).collect();
    viz.shuffle(&mut rng);
    instr.shuffle(&mut rng);
    let mut out = Vec::with_capacity(data.len());
    let (mut a, mut b) = (viz.into_iter(), instr.into_iter());
    loop {
        let (x, y) = (a.next(), b.next());
        if x.is_none() && y.is_none() {
            break;
        }
        out.extend(x);
        out.extend(y);
    }
    out
}

/// Positions whose logits are scored: those followed by a target label.
pub fn scored_rows(seq: &TokenSequence) -> Vec<usize> {
    (0..seq.len().saturating_sub(1)).filter(|&i| matches!(seq.labels[i + 1], Label::Target(_))).collect()
}

/// Loss and parameter gradient of one sample.
pub fn sample_loss_and_grad(
    model: &ToyModel,
    seq: &TokenSequence,
    space: &LossSpace,
    dist: &VisualDistances,
    loss: &LossConfig,
    grad: Option<&mut [f32]>,
) -> Result<f64, ModelError> {
    let rows = scored_rows(seq);
    let (cache, logits) = model.forward_train(&seq.ids, &rows)?;
    let v = space.width;
    let mut full = vec![0.0f64; seq.len() * v];
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..v {
            full[r * v + j] = logits[i * v + j] as f64;
        }
    }
    let res = masked_sequence_loss(seq, &full, space, dist, loss)?;
    if let Some(grad) = grad {
        let mut dlogits = vec![0.0f32; rows.len() * v];
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..v {
                dlogits[i * v + j] = res.grad[r * v + j] as f32;
            }
        }
        model.backward(&cache, &dlogits, grad);
    }
    Ok(res.value)
}

pub fn train(
    model: &mut ToyModel,
    data: &[TokenSequence],
    space: &LossSpace,
    dist: &VisualDistances,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainState, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if space.width != model.config.vocab_size {
        return Err(ModelError::InvalidConfig(format!("loss width {} vs vocab {}", space.width, model.config.vocab_size)));
    }
    if let Some(long) = data.iter().find(|s| s.len() > model.config.context_len) {
        return Err(ModelError::ContextOverflow { len: long.len(), limit: model.config.context_len });
    }
    let n_params = model.params.len();
    let mut state = resume.unwrap_or_else(|| TrainState { optimizer: Optimizer::new(cfg.optimizer, n_params), epochs_done: 0, trace: Vec::new() });
    if state.optimizer.m.len() != n_params {
        return Err(ModelError::InvalidConfig("optimizer state does not match the model".into()));
    }
    let group = cfg.batch_size * cfg.grad_accum;
    let steps_per_epoch = data.len().div_ceil(group);
    let total_steps = steps_per_epoch * cfg.epochs;

    for epoch in state.epochs_done..cfg.epochs {
        let order = epoch_order(data, cfg.seed, epoch);
        let mut sums = [(0.0f64, 0usize); 2];
        for (gi, chunk) in order.chunks(group).enumerate() {
            let model_ref: &ToyModel = model;
            let results: Vec<Result<(f64, Vec<f32>), ModelError>> = chunk
                .par_iter()
                .map(|&i| {
                    let mut g = vec![0.0f32; n_params];
                    let l = sample_loss_and_grad(model_ref, &data[i], space, dist, &cfg.loss, Some(&mut g))?;
                    Ok((l, g))
                })
                .collect();
            let mut grad = vec![0.0f32; n_params];
            for (&i, r) in chunk.iter().zip(results) {
                let (l, g) = r?;
                if !l.is_finite() {
                    let max_abs = model.params.iter().fold(0.0f32, |m, p| m.max(p.abs()));
                    return Err(ModelError::NonFiniteLoss {
                        epoch,
                        sample: i,
                        diagnostics: format!("loss {l}, kind {:?}, len {}, max |param| {max_abs}", data[i].kind, data[i].len()),
                    });
                }
                let slot = usize::from(data[i].kind == TaskKind::Instr);
                sums[slot].0 += l;
                sums[slot].1 += 1;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / chunk.len() as f32;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            if let Some(clip) = cfg.clip_norm {
                let norm = grad.iter().map(|g| (*g as f64).powi(2)).sum::<f64>().sqrt() as f32;
                if norm > clip {
                    let s = clip / norm;
                    for g in grad.iter_mut() {
                        *g *= s;
                    }
                }
            }
            let lr = cfg.lr_at(epoch * steps_per_epoch + gi, total_steps);
            state.optimizer.update(&mut model.params, &grad, lr);
        }
        let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        let stats = EpochStats {
            epoch,
            mean_loss: (sums[0].0 + sums[1].0) / (sums[0].1 + sums[1].1) as f64,
            viz_loss: mean(sums[0]),
            instr_loss: mean(sums[1]),
        };
        on_epoch(&stats);
        state.trace.push(stats);
        state.epochs_done = epoch + 1;
    }
    Ok(state)
}

/// Teacher-forced top-1 accuracy over visual targets, argmax restricted to
/// visual ids. Returns `(correct, total)`.
pub fn visual_token_accuracy(model: &ToyModel, data: &[TokenSequence], space: &LossSpace) -> Result<(usize, usize), ModelError> {
    let per: Vec<Result<(usize, usize), ModelError>> = data
        .par_iter()
        .map(|seq| {
            let rows = scored_rows(seq);
            let (_, logits) = model.forward_train(&seq.ids, &rows)?;
            let v = space.width;
            let (mut hit, mut total) = (0, 0);
            for (i, &r) in rows.iter().enumerate() {
                let Label::Target(id) = seq.labels[r + 1] else { continue };
                if !space.visual.contains(&id) {
                    continue;
                }
                let row = &logits[i * v..(i + 1) * v];
                let best = space.visual.clone().max_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(b.cmp(&a))).unwrap();
                hit += usize::from(best == id);
                total += 1;
            }
            Ok((hit, total))
        })
        .collect();
    per.into_iter().try_fold((0, 0), |(h, t), r| r.map(|(a, b)| (h + a, t + b)))
}

/// Mean per-sample loss without updating anything.
pub fn evaluate_loss(model: &ToyModel, data: &[TokenSequence], space: &LossSpace, dist: &VisualDistances, loss: &LossConfig) -> Result<f64, ModelError> {
    let vals: Vec<Result<f64, ModelError>> =
        data.par_iter().map(|s| sample_loss_and_grad(model, s, space, dist, loss, None)).collect();
    let mut total = 0.0;
    for v in vals {
        total += v?;
    }
    Ok(total / data.len().max(1) as f64)
}
