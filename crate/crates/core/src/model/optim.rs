use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { momentum: f32 },
    AdamW { beta1: f32, beta2: f32, eps: f32, weight_decay: f32 },
}

impl OptimizerKind {
    /// The usual transformer fine-tuning preset.
    pub fn adamw() -> Self {
        OptimizerKind::AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }

    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: 0.9 }
    }
}

/// Optimizer state. SGD keeps one velocity buffer; AdamW keeps two moment
/// buffers and a step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let v = match kind {
            OptimizerKind::Sgd { .. } => Vec::new(),
            OptimizerKind::AdamW { .. } => vec![0.0; n_params],
        };
        Self { kind, step: 0, m: vec![0.0; n_params], v }
    }

    /// Apply one update. With `lr == 0` parameters are left untouched.
    pub fn update(&mut self, params: &mut [f32], grad: &[f32], lr: f32) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), m) in params.iter_mut().zip(grad).zip(self.m.iter_mut()) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::AdamW { beta1, beta2, eps, weight_decay } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= lr * (mh / (vh.sqrt() + eps) + weight_decay * params[i]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_momentum_closed_form() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd { momentum: 0.5 }, 1);
        let mut p = [1.0f32];
        opt.update(&mut p, &[2.0], 0.1);
        assert!((p[0] - 0.8).abs() < 1e-7);
        opt.update(&mut p, &[2.0], 0.1);
        // velocity 0.5 * 2 + 2 = 3
        assert!((p[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn adamw_first_step_is_sign_sized() {
        let mut opt = Optimizer::new(OptimizerKind::AdamW { beta1: 0.9, beta2: 0.999, eps: 0.0, weight_decay: 0.0 }, 2);
        let mut p = [0.0f32, 0.0];
        opt.update(&mut p, &[3.0, -0.001], 0.01);
        assert!((p[0] + 0.01).abs() < 1e-6 && (p[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_identity() {
        for kind in [OptimizerKind::sgd(), OptimizerKind::adamw()] {
            let mut opt = Optimizer::new(kind, 3);
            let mut p = [0.5f32, -1.0, 2.0];
            opt.update(&mut p, &[1.0, 2.0, 3.0], 0.0);
            assert_eq!(p, [0.5, -1.0, 2.0]);
        }
    }
}
