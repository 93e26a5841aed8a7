//! Training objectives over logit rows, with exact gradients.
//!
//! Logits arrive as a flat row-major buffer of `rows x width`, where `width`
//! is the unified vocabulary size. Every loss returns a gradient buffer of
//! the same shape.

mod gradcheck;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tokenizer::{Label, TokenSequence, UnifiedVocab, VisualCodebook};

pub use gradcheck::{central_difference, gradcheck_suite, relative_error, GradcheckReport};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("ground-truth id {0} is not a visual token")]
    NonVisualGroundTruth(u32),
    #[error("ground-truth id {0} is outside the text support")]
    NonTextGroundTruth(u32),
    #[error("smoothing factor {0} must lie in [0, 1)")]
    BadEpsilon(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Where the visual-token softmax is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualSoftmax {
    /// Over the visual sub-vocabulary only.
    #[default]
    Restricted,
    /// Over the whole vocabulary; non-visual ids carry the largest distance
    /// in the ground-truth row.
    FullVocab,
}

/// How smoothing mass is spread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `1 - eps` on the ground truth, `eps / (|S| - 1)` on every other id.
    #[default]
    Others,
    /// `1 - eps + eps / |S|` on the ground truth, `eps / |S|` elsewhere.
    Uniform,
}

/// Objective applied to visual targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualObjective {
    #[default]
    TokenDiscrepancy,
    /// Label-smoothed cross-entropy over the visual ids (ablation baseline).
    SmoothedCe,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub smoothing: Smoothing,
    pub visual_softmax: VisualSoftmax,
    pub visual_objective: VisualObjective,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            smoothing: Smoothing::Others,
            visual_softmax: VisualSoftmax::Restricted,
            visual_objective: VisualObjective::TokenDiscrepancy,
        }
    }
}

/// Id layout the losses need: row width, the visual id range, and the ids a
/// text target may take.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LossSpace {
    pub width: usize,
    pub visual: Range<u32>,
    pub text_support: Vec<u32>,
}

impl LossSpace {
    pub fn from_vocab(vocab: &UnifiedVocab) -> Self {
        Self { width: vocab.size(), visual: vocab.visual_ids(), text_support: vocab.text_support() }
    }

    fn visual_code(&self, id: u32) -> Option<usize> {
        self.visual.contains(&id).then(|| (id - self.visual.start) as usize)
    }
}

/// Pairwise mean squared distances between codebook embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualDistances {
    n: usize,
    d: Vec<f64>,
}

impl VisualDistances {
    pub fn from_codebook(cb: &VisualCodebook) -> Self {
        Self { n: cb.len(), d: cb.distance_matrix() }
    }

    pub fn from_embeddings(emb: &[Vec<f64>]) -> Self {
        let n = emb.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = emb[i].iter().zip(&emb[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / emb[i].len() as f64;
            }
        }
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, gt: usize) -> &[f64] {
        &self.d[gt * self.n..(gt + 1) * self.n]
    }
}

fn check_rows(logits: &[f64], width: usize, rows: usize) -> Result<(), LossError> {
    if width == 0 || logits.len() != rows * width {
        return Err(LossError::ShapeMismatch(format!("{} logits for {rows} rows of width {width}", logits.len())));
    }
    Ok(())
}

/// Softmax over the given ids of one row, max-shifted.
fn softmax_over(row: &[f64], ids: impl Iterator<Item = usize> + Clone) -> Vec<f64> {
    let m = ids.clone().map(|i| row[i]).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = ids.map(|i| (row[i] - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// One position of the token discrepancy loss; writes into `grad_row`.
fn discrepancy_row(row: &[f64], gt: usize, space: &LossSpace, dist: &VisualDistances, mode: VisualSoftmax, grad_row: &mut [f64]) -> f64 {
    let vis = space.visual.start as usize..space.visual.end as usize;
    let drow = dist.row(gt);
    match mode {
        VisualSoftmax::Restricted => {
            let p = softmax_over(row, vis.clone());
            let loss: f64 = p.iter().zip(drow).map(|(p, d)| p * d).sum();
            for (j, id) in vis.enumerate() {
                grad_row[id] += p[j] * (drow[j] - loss);
            }
            loss
        }
        VisualSoftmax::FullVocab => {
            let far = drow.iter().cloned().fold(0.0, f64::max);
            let p = softmax_over(row, 0..row.len());
            let d_of = |id: usize| if vis.contains(&id) { drow[id - vis.start] } else { far };
            let loss: f64 = (0..row.len()).map(|id| p[id] * d_of(id)).sum();
            for id in 0..row.len() {
                grad_row[id] += p[id] * (d_of(id) - loss);
            }
            loss
        }
    }
}

/// One position of label-smoothed cross-entropy over `support`.
fn smoothed_row(row: &[f64], gt: u32, support: &[u32], eps: f64, mode: Smoothing, grad_row: &mut [f64]) -> f64 {
    let p = softmax_over(row, support.iter().map(|&i| i as usize));
    let s = support.len() as f64;
    let (on, off) = match mode {
        _ if support.len() == 1 => (1.0, 0.0),
        Smoothing::Others => (1.0 - eps, eps / (s - 1.0)),
        Smoothing::Uniform => (1.0 - eps + eps / s, eps / s),
    };
    let mut loss = 0.0;
    for (j, &id) in support.iter().enumerate() {
        let q = if id == gt { on } else { off };
        if q > 0.0 {
            loss -= q * p[j].ln();
        }
        grad_row[id as usize] += p[j] - q;
    }
    loss
}

/// Sum over positions of `sum_j P_j * MSE(emb_gt, emb_j)`.
pub fn token_discrepancy_loss(
    logits: &[f64],
    gt: &[u32],
    space: &LossSpace,
    dist: &VisualDistances,
    mode: VisualSoftmax,
) -> Result<LossResult, LossError> {
    check_rows(logits, space.width, gt.len())?;
    if dist.len() != space.visual.len() {
        return Err(LossError::ShapeMismatch(format!("{} distances for {} visual ids", dist.len(), space.visual.len())));
    }
    let mut grad = vec![0.0; logits.len()];
    let mut value = 0.0;
    for (i, &id) in gt.iter().enumerate() {
        let code = space.visual_code(id).ok_or(LossError::NonVisualGroundTruth(id))?;
        let r = i * space.width..(i + 1) * space.width;
        value += discrepancy_row(&logits[r.clone()], code, space, dist, mode, &mut grad[r]);
    }
    Ok(LossResult { value, grad })
}

/// Label-smoothed cross-entropy over an explicit support set.
pub fn smoothed_cross_entropy(
    logits: &[f64],
    width: usize,
    gt: &[u32],
    support: &[u32],
    eps: f64,
    mode: Smoothing,
) -> Result<LossResult, LossError> {
    check_rows(logits, width, gt.len())?;
    if !(0.0..1.0).contains(&eps) {
        return Err(LossError::BadEpsilon(eps));
    }
    if support.iter().any(|&id| id as usize >= width) {
        return Err(LossError::ShapeMismatch("support id exceeds row width".into()));
    }
    let mut grad = vec![0.0; logits.len()];
    let mut value = 0.0;
    for (i, &id) in gt.iter().enumerate() {
        if !support.contains(&id) {
            return Err(LossError::NonTextGroundTruth(id));
        }
        let r = i * width..(i + 1) * width;
        value += smoothed_row(&logits[r.clone()], id, support, eps, mode, &mut grad[r]);
    }
    Ok(LossResult { value, grad })
}

/// Label smoothing over the text support (text ids and EOS).
pub fn label_smoothing_loss(logits: &[f64], gt: &[u32], space: &LossSpace, eps: f64, mode: Smoothing) -> Result<LossResult, LossError> {
    smoothed_cross_entropy(logits, space.width, gt, &space.text_support, eps, mode)
}

/// Masked loss over a full sequence. Row `i` is scored against `labels[i+1]`;
/// visual labels go to the visual objective, everything else to label
/// smoothing. Masked positions get exactly zero gradient.
pub fn masked_sequence_loss(
    seq: &TokenSequence,
    logits: &[f64],
    space: &LossSpace,
    dist: &VisualDistances,
    cfg: &LossConfig,
) -> Result<LossResult, LossError> {
    check_rows(logits, space.width, seq.len())?;
    if seq.labels.len() != seq.ids.len() {
        return Err(LossError::ShapeMismatch("labels and ids differ in length".into()));
    }
    if !(0.0..1.0).contains(&cfg.epsilon) {
        return Err(LossError::BadEpsilon(cfg.epsilon));
    }
    let visual_support: Vec<u32> = space.visual.clone().collect();
    let mut grad = vec![0.0; logits.len()];
    let mut value = 0.0;
    for i in 0..seq.len().saturating_sub(1) {
        let Label::Target(id) = seq.labels[i + 1] else { continue };
        let r = i * space.width..(i + 1) * space.width;
        let (row, g) = (&logits[r.clone()], &mut grad[r]);
        value += match space.visual_code(id) {
            Some(code) => match cfg.visual_objective {
                VisualObjective::TokenDiscrepancy => discrepancy_row(row, code, space, dist, cfg.visual_softmax, g),
                VisualObjective::SmoothedCe => smoothed_row(row, id, &visual_support, cfg.epsilon, cfg.smoothing, g),
            },
            None => {
                if !space.text_support.contains(&id) {
                    return Err(LossError::NonTextGroundTruth(id));
                }
                smoothed_row(row, id, &space.text_support, cfg.epsilon, cfg.smoothing, g)
            }
        };
    }
    Ok(LossResult { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::TaskKind;

    fn square() -> (LossSpace, VisualDistances) {
        let emb = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        (LossSpace { width: 4, visual: 0..4, text_support: vec![] }, VisualDistances::from_embeddings(&emb))
    }

    #[test]
    fn discrepancy_hand_values() {
        let (space, dist) = square();
        let uniform = token_discrepancy_loss(&[0.0; 4], &[0], &space, &dist, VisualSoftmax::Restricted).unwrap();
        assert!((uniform.value - 0.5).abs() < 1e-12);
        let peaked = token_discrepancy_loss(&[-50.0, -50.0, -50.0, 50.0], &[0], &space, &dist, VisualSoftmax::Restricted).unwrap();
        assert!((peaked.value - 1.0).abs() < 1e-12);
        let correct = token_discrepancy_loss(&[80.0, 0.0, 0.0, 0.0], &[0], &space, &dist, VisualSoftmax::Restricted).unwrap();
        assert!(correct.value < 1e-30);
    }

    #[test]
    fn moving_mass_closer_lowers_discrepancy() {
        let (space, dist) = square();
        let far = token_discrepancy_loss(&[0.0, 0.0, 0.0, 1.0], &[0], &space, &dist, VisualSoftmax::Restricted).unwrap();
        let near = token_discrepancy_loss(&[0.0, 1.0, 0.0, 0.0], &[0], &space, &dist, VisualSoftmax::Restricted).unwrap();
        assert!(near.value < far.value);
    }

    #[test]
    fn smoothing_hand_values() {
        let space = LossSpace { width: 4, visual: 4..4, text_support: vec![0, 1, 2, 3] };
        let p = [0.7f64, 0.1, 0.1, 0.1];
        let logits: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        let r = label_smoothing_loss(&logits, &[0], &space, 0.1, Smoothing::Others).unwrap();
        let expected = -(0.9 * 0.7f64.ln() + 0.1 * 0.1f64.ln());
        assert!((r.value - expected).abs() < 1e-12);
        assert!((r.value - 0.5513).abs() < 1e-4);
        for eps in [0.0, 0.1, 0.5] {
            for mode in [Smoothing::Others, Smoothing::Uniform] {
                let u = label_smoothing_loss(&[0.0; 4], &[2], &space, eps, mode).unwrap();
                assert!((u.value - 4f64.ln()).abs() < 1e-12);
            }
        }
        assert!(matches!(label_smoothing_loss(&[0.0; 4], &[0], &space, 1.0, Smoothing::Others), Err(LossError::BadEpsilon(_))));
        assert!(matches!(label_smoothing_loss(&[0.0; 4], &[7], &space, 0.1, Smoothing::Others), Err(LossError::NonTextGroundTruth(7))));
    }

    #[test]
    fn masked_dispatch_sums_sub_losses() {
        // ids: 3 text (0..3), 4 visual (3..7), eos = 7
        let emb: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 / 4.0, (i % 2) as f64]).collect();
        let dist = VisualDistances::from_embeddings(&emb);
        let space = LossSpace { width: 8, visual: 3..7, text_support: vec![0, 1, 2, 7] };
        let seq = TokenSequence {
            kind: TaskKind::Viz,
            ids: vec![0, 1, 4, 5, 2, 7],
            labels: vec![Label::Masked, Label::Masked, Label::Target(4), Label::Target(5), Label::Target(2), Label::Target(7)],
        };
        let logits: Vec<f64> = (0..48).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let cfg = LossConfig::default();
        let total = masked_sequence_loss(&seq, &logits, &space, &dist, &cfg).unwrap();
        let vis = token_discrepancy_loss(&logits[8..24], &[4, 5], &space, &dist, VisualSoftmax::Restricted).unwrap();
        let txt = label_smoothing_loss(&logits[24..40], &[2, 7], &space, 0.1, Smoothing::Others).unwrap();
        assert!((total.value - vis.value - txt.value).abs() < 1e-12);
        assert!(total.grad[..8].iter().all(|&g| g == 0.0));
        assert!(total.grad[40..].iter().all(|&g| g == 0.0));
        assert_eq!(&total.grad[8..24], &vis.grad[..]);

        let masked = TokenSequence { labels: vec![Label::Masked; 6], ..seq };
        let zero = masked_sequence_loss(&masked, &logits, &space, &dist, &cfg).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.grad.iter().all(|&g| g == 0.0));
    }
}
