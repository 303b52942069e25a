use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    RmsProp { lr: f64, decay: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam at learning rate 0.01 with the usual moment defaults.
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// RMSprop at learning rate 1e-4.
    pub fn rms_prop() -> Self {
        OptimizerKind::RmsProp {
            lr: 1e-4,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

/// Optimiser with per-parameter accumulators shaped like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerState {
            kind,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) {
        assert_eq!(params.len(), grads.len(), "parameter / gradient count");
        if self.second.is_empty() {
            self.first = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape of parameter {k}");
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                match self.kind {
                    OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / (1.0 - beta1.powi(t));
                        let v_hat = v[i] / (1.0 - beta2.powi(t));
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    OptimizerKind::RmsProp { lr, decay, eps } => {
                        v[i] = decay * v[i] + (1.0 - decay) * gi * gi;
                        *w -= lr * gi / (v[i].sqrt() + eps);
                    }
                }
            }
        }
    }
}
