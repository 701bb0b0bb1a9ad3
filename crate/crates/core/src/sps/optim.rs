//! Adam with bias correction and the milestone learning-rate schedule.

use thiserror::Error;

use super::model::SpsModel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient in `{param}` at element {index} (value {value})")]
    NonFiniteGrad { param: String, index: usize, value: f64 },
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamSlot {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Optimizer state aligned with the model's parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub slots: Vec<AdamSlot>,
    pub step: u64,
}

impl Adam {
    pub fn new(model: &SpsModel) -> Adam {
        Adam {
            slots: model
                .params()
                .iter()
                .map(|p| AdamSlot { m: vec![0.0; p.numel()], v: vec![0.0; p.numel()] })
                .collect(),
            step: 0,
        }
    }

    /// One update over every parameter from its accumulated gradient.
    pub fn step(&mut self, model: &mut SpsModel, lr: f64) -> Result<(), OptimError> {
        self.step += 1;
        let t = self.step;
        for (p, slot) in model.params_mut().into_iter().zip(&mut self.slots) {
            adam_step(&mut p.value, &p.grad, &mut slot.m, &mut slot.v, t, lr).map_err(
                |(index, value)| OptimError::NonFiniteGrad { param: p.name.clone(), index, value },
            )?;
        }
        Ok(())
    }
}

/// Standard bias-corrected Adam update on one tensor. `t` is the 1-based
/// step count. Fails on the first non-finite gradient element.
pub fn adam_step(
    value: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
) -> Result<(), (usize, f64)> {
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for i in 0..value.len() {
        let g = grad[i];
        if !g.is_finite() {
            return Err((i, g));
        }
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        value[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Milestone schedule: the base rate halves (by `gamma`) at each milestone
/// that the epoch has reached.
pub fn lr_at_epoch(base_lr: f64, epoch: usize, milestones: &[usize], gamma: f64) -> f64 {
    let hits = milestones.iter().filter(|&&m| m <= epoch).count();
    base_lr * gamma.powi(hits as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_follows_milestones() {
        let ms = [30, 60, 80, 160];
        assert_eq!(lr_at_epoch(0.001, 0, &ms, 0.5), 0.001);
        assert_eq!(lr_at_epoch(0.001, 29, &ms, 0.5), 0.001);
        assert_eq!(lr_at_epoch(0.001, 30, &ms, 0.5), 0.0005);
        assert_eq!(lr_at_epoch(0.001, 79, &ms, 0.5), 0.00025);
        assert_eq!(lr_at_epoch(0.001, 80, &ms, 0.5), 0.000125);
        assert_eq!(lr_at_epoch(0.001, 160, &ms, 0.5), 0.0000625);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        // With no first moment a zero gradient moves nothing; the second
        // moment still decays.
        let mut w = vec![0.7, -0.3];
        let mut m = vec![0.0, 0.0];
        let mut v = vec![0.25, 0.25];
        adam_step(&mut w, &[0.0, 0.0], &mut m, &mut v, 1, 0.001).unwrap();
        assert_eq!(w, vec![0.7, -0.3]);
        assert_eq!(m, vec![0.0, 0.0]);
        assert!((v[0] - 0.24975).abs() < 1e-15);
    }

    #[test]
    fn single_step_matches_analytic_value() {
        // Fresh state, w = 0, g = 1, lr = 0.001:
        // m_hat = 1, v_hat = 1, w' = -lr / (1 + eps).
        let mut w = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adam_step(&mut w, &[1.0], &mut m, &mut v, 1, 0.001).unwrap();
        let expected = -0.001 / (1.0 + ADAM_EPS);
        assert!((w[0] - expected).abs() < 1e-15, "{} vs {}", w[0], expected);
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let run = || {
            let mut w = vec![0.2, -0.4];
            let mut m = vec![0.0; 2];
            let mut v = vec![0.0; 2];
            for t in 1..=5 {
                adam_step(&mut w, &[0.3, -0.1], &mut m, &mut v, t, 0.01).unwrap();
            }
            w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut w = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        let err = adam_step(&mut w, &[f64::NAN], &mut m, &mut v, 1, 0.001).unwrap_err();
        assert_eq!(err.0, 0);
    }
}
