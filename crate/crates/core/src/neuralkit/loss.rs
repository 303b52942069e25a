use serde::{Deserialize, Serialize};

/// Transition point of the smooth-L1 loss.
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Mse,
    SmoothL1,
}

impl LossKind {
    /// Per-element loss of prediction `p` against target `t`.
    pub fn value(self, p: f64, t: f64) -> f64 {
        let d = p - t;
        match self {
            LossKind::Mse => d * d,
            LossKind::SmoothL1 if d.abs() < SMOOTH_L1_BETA => 0.5 * d * d / SMOOTH_L1_BETA,
            LossKind::SmoothL1 => d.abs() - 0.5 * SMOOTH_L1_BETA,
        }
    }

    /// `∂ value / ∂ p`.
    pub fn grad(self, p: f64, t: f64) -> f64 {
        let d = p - t;
        match self {
            LossKind::Mse => 2.0 * d,
            LossKind::SmoothL1 if d.abs() < SMOOTH_L1_BETA => d / SMOOTH_L1_BETA,
            LossKind::SmoothL1 => d.signum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(LossKind::Mse.value(0.5, 0.0), 0.25);
        assert_eq!(LossKind::SmoothL1.value(0.5, 0.5), 0.0);
        assert_eq!(LossKind::SmoothL1.value(0.5, 0.0), 0.125);
        assert_eq!(LossKind::SmoothL1.value(3.0, 0.0), 2.5);
        assert_eq!(LossKind::SmoothL1.grad(3.0, 0.0), 1.0);
        assert_eq!(LossKind::Mse.grad(0.2, 0.2), 0.0);
    }

    #[test]
    fn smooth_l1_is_continuous_at_transition() {
        let below = LossKind::SmoothL1.value(1.0 - 1e-12, 0.0);
        let above = LossKind::SmoothL1.value(1.0 + 1e-12, 0.0);
        assert!((below - above).abs() < 1e-9);
    }
}
