//! Scalar training losses: focal classification, smooth-L1 regression,
//! direction and IoU binary cross-entropy, and their weighted combination.
//!
//! These are values only; nothing here tracks gradients except the closed
//! form [`iou_bce_grad`].

use serde::{Deserialize, Serialize};

/// Clamp applied to every probability that enters a logarithm.
pub const LOG_EPS: f64 = 1e-7;

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Regression weight.
    pub alpha1: f64,
    /// Direction weight.
    pub alpha2: f64,
    /// Source-domain weight in the joint objective.
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 2.0,
            alpha2: 0.2,
            lambda: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("loss weight {name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS)
}

fn bce(p: f64, target: f64) -> f64 {
    let p = clamp_prob(p);
    (-target * p.ln() - (1.0 - target) * (1.0 - p).ln()).max(0.0)
}

/// Binary cross-entropy between the predicted IoU `u` and the IoU target
/// `u_hat`.
pub fn iou_bce_loss(u: f64, u_hat: f64) -> f64 {
    bce(u, u_hat)
}

/// `∂L/∂u` of [`iou_bce_loss`] at the clamped `u`.
pub fn iou_bce_grad(u: f64, u_hat: f64) -> f64 {
    let u = clamp_prob(u);
    (u - u_hat) / (u * (1.0 - u))
}

pub fn focal_loss(p: f64, target: bool) -> f64 {
    focal_loss_with(p, target, FOCAL_ALPHA, FOCAL_GAMMA)
}

pub fn focal_loss_with(p: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
    let p = clamp_prob(p);
    if target {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

pub fn smooth_l1(residual: f64) -> f64 {
    smooth_l1_with(residual, SMOOTH_L1_BETA)
}

/// Quadratic `0.5 r²/β` inside `|r| < β`, linear `|r| − β/2` outside.
pub fn smooth_l1_with(residual: f64, beta: f64) -> f64 {
    let a = residual.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

/// Cross-entropy of the heading-bin classifier.
pub fn direction_bce(p_dir: f64, target: bool) -> f64 {
    bce(p_dir, if target { 1.0 } else { 0.0 })
}

/// `L_cls + α1·L_reg + α2·L_dir + L_iou`.
pub fn detection_loss(cls: f64, reg: f64, dir: f64, iou: f64, w: &LossWeights) -> f64 {
    cls + w.alpha1 * reg + w.alpha2 * dir + iou
}

/// `λ·L_source + L_target`.
pub fn overall_loss(source: f64, target: f64, w: &LossWeights) -> f64 {
    w.lambda * source + target
}

/// Mean per-term losses of one domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub cls: f64,
    pub reg: f64,
    pub dir: f64,
    pub iou: f64,
}

impl LossTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        detection_loss(self.cls, self.reg, self.dir, self.iou, w)
    }
}
