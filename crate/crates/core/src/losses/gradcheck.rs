use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{label_smoothing_loss, token_discrepancy_loss, LossSpace, Smoothing, VisualDistances, VisualSoftmax};

/// `|a - n| / max(|a|, |n|, floor)`. The floor keeps gradients that are
/// zero up to rounding from dominating the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_rel_error_vis: f64,
    pub max_rel_error_ins: f64,
    pub seconds: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_vis.max(self.max_rel_error_ins)
    }
}

const STEP: f64 = 1e-5;

/// Random small instances of both losses (codebooks of at most 8 entries,
/// text supports of at most 16 ids, at most 6 positions), comparing analytic
/// and central-difference gradients.
pub fn gradcheck_suite(instances: usize, seed: u64) -> GradcheckReport {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut vis_err, mut ins_err) = (0.0f64, 0.0f64);
    for inst in 0..instances {
        let n_vis = rng.gen_range(2..=8usize);
        let n_txt = rng.gen_range(2..=16usize);
        let rows = rng.gen_range(1..=6usize);
        let dim = rng.gen_range(1..=6usize);
        let width = n_txt + n_vis;
        let space = LossSpace { width, visual: n_txt as u32..width as u32, text_support: (0..n_txt as u32).collect() };
        let emb: Vec<Vec<f64>> = (0..n_vis).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
        let dist = VisualDistances::from_embeddings(&emb);
        let logits: Vec<f64> = (0..rows * width).map(|_| rng.gen_range(-3.0..3.0)).collect();

        let mode = if inst % 2 == 0 { VisualSoftmax::Restricted } else { VisualSoftmax::FullVocab };
        let gt_vis: Vec<u32> = (0..rows).map(|_| rng.gen_range(space.visual.clone())).collect();
        let analytic = token_discrepancy_loss(&logits, &gt_vis, &space, &dist, mode).unwrap().grad;
        let numeric = central_difference(&logits, STEP, |x| token_discrepancy_loss(x, &gt_vis, &space, &dist, mode).unwrap().value);
        vis_err = analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).fold(vis_err, f64::max);

        let eps = rng.gen_range(0.0..0.5);
        let smoothing = if inst % 3 == 0 { Smoothing::Uniform } else { Smoothing::Others };
        let gt_txt: Vec<u32> = (0..rows).map(|_| rng.gen_range(0..n_txt as u32)).collect();
        let analytic = label_smoothing_loss(&logits, &gt_txt, &space, eps, smoothing).unwrap().grad;
        let numeric = central_difference(&logits, STEP, |x| label_smoothing_loss(x, &gt_txt, &space, eps, smoothing).unwrap().value);
        ins_err = analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).fold(ins_err, f64::max);
    }
    GradcheckReport { instances, max_rel_error_vis: vis_err, max_rel_error_ins: ins_err, seconds: start.elapsed().as_secs_f64() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_instances() {
        let r = gradcheck_suite(10, 1);
        assert!(r.max_rel_error() < 1e-4, "{r:?}");
    }
}
