//! Multitask loss: cross entropy on the target, action, and next-state
//! heads, KL divergence on the belief head, plus L1/L2 weight regularization.
//! Head losses are batch means and carry equal weight.

use super::model::{BatchOutputs, HeadGrads, SpsModel, Variant};
use super::nn::softmax_rows;
use crate::gridworld::{Action, CELLS};

/// Loss value decomposed by source.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce_target: f64,
    pub ce_action: f64,
    pub ce_state: f64,
    pub kl_belief: f64,
    pub l1: f64,
    pub l2: f64,
}

impl LossParts {
    pub fn data_total(&self) -> f64 {
        self.ce_target + self.ce_action + self.ce_state + self.kl_belief
    }
}

/// Supervision for one batch.
#[derive(Debug, Clone, Default)]
pub struct BatchLabels {
    pub target: Vec<usize>,
    pub action: Vec<usize>,
    pub state: Vec<usize>,
    /// Row-major `[B][121]` belief distributions.
    pub belief: Vec<f64>,
}

fn cross_entropy(
    logits: &[f64],
    labels: &[usize],
    dim: usize,
    dlogits: &mut Vec<f64>,
) -> f64 {
    let batch = labels.len();
    softmax_rows(logits, batch, dim, dlogits);
    let mut loss = 0.0;
    let inv_b = 1.0 / batch as f64;
    for (b, &label) in labels.iter().enumerate() {
        let p = dlogits[b * dim + label];
        loss -= p.max(1e-300).ln();
        dlogits[b * dim + label] -= 1.0;
    }
    dlogits.iter_mut().for_each(|d| *d *= inv_b);
    loss * inv_b
}

/// KL(label || softmax(logits)), batch mean. The gradient with respect to
/// the logits is softmax - label, the same form as soft-target cross entropy.
fn kl_divergence(logits: &[f64], labels: &[f64], dim: usize, dlogits: &mut Vec<f64>) -> f64 {
    let batch = labels.len() / dim;
    softmax_rows(logits, batch, dim, dlogits);
    let mut loss = 0.0;
    let inv_b = 1.0 / batch as f64;
    for b in 0..batch {
        for i in 0..dim {
            let l = labels[b * dim + i];
            let p = dlogits[b * dim + i];
            if l > 0.0 {
                loss += l * (l.ln() - p.max(1e-300).ln());
            }
            dlogits[b * dim + i] = (p - l) * inv_b;
        }
    }
    loss * inv_b
}

/// Head losses and their logit gradients for one batch.
pub fn compute_loss(
    outputs: &BatchOutputs,
    labels: &BatchLabels,
    variant: Variant,
) -> (LossParts, HeadGrads) {
    let mut grads = HeadGrads::default();
    let ce_target = cross_entropy(&outputs.target_logits, &labels.target, CELLS, &mut grads.target);
    let ce_action =
        cross_entropy(&outputs.action_logits, &labels.action, Action::COUNT, &mut grads.action);
    let ce_state = cross_entropy(&outputs.state_logits, &labels.state, CELLS, &mut grads.state);
    let mut kl_belief = 0.0;
    if variant.has_belief_head() {
        let logits = outputs
            .belief_logits
            .as_ref()
            .expect("belief variant forward must produce belief logits");
        let mut db = Vec::new();
        kl_belief = kl_divergence(logits, &labels.belief, CELLS, &mut db);
        grads.belief = Some(db);
    }
    let parts = LossParts {
        total: ce_target + ce_action + ce_state + kl_belief,
        ce_target,
        ce_action,
        ce_state,
        kl_belief,
        l1: 0.0,
        l2: 0.0,
    };
    (parts, grads)
}

/// L1/L2 penalty over connection weights (biases and batch-norm parameters
/// excluded). Returns (l1_term, l2_term) without touching gradients.
pub fn regularization_value(model: &SpsModel, l1: f64, l2: f64) -> (f64, f64) {
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for p in model.params() {
        if p.decay {
            for &w in &p.value {
                abs_sum += w.abs();
                sq_sum += w * w;
            }
        }
    }
    (l1 * abs_sum, l2 * sq_sum)
}

/// Adds the regularization gradient to every decayed weight.
pub fn add_regularization_grads(model: &mut SpsModel, l1: f64, l2: f64) {
    for p in model.params_mut() {
        if p.decay {
            for (g, &w) in p.grad.iter_mut().zip(&p.value) {
                *g += l1 * w.signum() + 2.0 * l2 * w;
            }
        }
    }
}
