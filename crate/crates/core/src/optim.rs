//! First-order optimizers over lists of parameter slices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Momentum {
        beta: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub steps: u64,
    /// Velocity (momentum) or first moment (Adam), one buffer per slice.
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, shapes: &[usize]) -> Self {
        let bufs = || shapes.iter().map(|&n| vec![0.0; n]).collect();
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Momentum { .. } => (bufs(), Vec::new()),
            OptimizerKind::Adam { .. } => (bufs(), bufs()),
        };
        Self {
            kind,
            steps: 0,
            first,
            second,
        }
    }

    /// `params -= lr · update(grads)`, slice by slice.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), grads.len(), "optimizer: slice count mismatch");
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (pi, gi) in p.iter_mut().zip(*g) {
                        *pi -= lr * gi;
                    }
                }
            }
            OptimizerKind::Momentum { beta } => {
                for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.first) {
                    for ((pi, gi), vi) in p.iter_mut().zip(*g).zip(v.iter_mut()) {
                        *vi = beta * *vi + gi;
                        *pi -= lr * *vi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((pi, gi), mi), vi) in p.iter_mut().zip(*g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(kind: OptimizerKind, lr: f64) -> f64 {
        // f(x) = ½‖x − 3‖²
        let mut x = vec![0.0, 10.0];
        let mut opt = OptimizerState::new(kind, &[2]);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| v - 3.0).collect();
            opt.step(vec![x.as_mut_slice()], &[&g], lr);
        }
        x.iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn all_variants_reach_the_minimum() {
        assert!(minimize(OptimizerKind::Sgd, 0.1) < 1e-9);
        assert!(minimize(OptimizerKind::Momentum { beta: 0.9 }, 0.01) < 1e-6);
        let adam = OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        assert!(minimize(adam, 0.05) < 1e-3);
    }

    #[test]
    fn sgd_is_plain_gradient_step() {
        let mut p = vec![1.0, 2.0];
        OptimizerState::new(OptimizerKind::Sgd, &[2]).step(vec![p.as_mut_slice()], &[&[0.5, -1.0]], 0.1);
        assert_eq!(p, vec![1.0 - 0.05, 2.0 + 0.1]);
    }
}
