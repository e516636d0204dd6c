//! Adam with bias correction. Moment buffers live in the optimizer, aligned
//! by index with the parameter list it was built for; gradients are left
//! untouched so the caller decides when to zero them.

use super::{Elem, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let cfg = OptimizerConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
        };
        cfg.validate();
        cfg
    }

    fn validate(&self) {
        assert!(self.learning_rate > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&self.beta1), "beta1 must be in [0,1)");
        assert!((0.0..1.0).contains(&self.beta2), "beta2 must be in [0,1)");
        assert!(self.epsilon > 0.0, "epsilon must be positive");
    }
}

pub struct Adam<E: Elem> {
    config: OptimizerConfig,
    step_count: u64,
    /// (first moment, second moment) per parameter, index-aligned.
    slots: Vec<(Vec<E>, Vec<E>)>,
}

impl<E: Elem> Adam<E> {
    pub fn new(config: OptimizerConfig, params: &[Tensor<E>]) -> Self {
        config.validate();
        let slots = params
            .iter()
            .map(|p| (vec![E::ZERO; p.numel()], vec![E::ZERO; p.numel()]))
            .collect();
        Adam {
            config,
            step_count: 0,
            slots,
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Adjust the learning rate (the epoch schedule drives this).
    pub fn set_learning_rate(&mut self, lr: f64) {
        assert!(lr > 0.0, "learning rate must be positive");
        self.config.learning_rate = lr;
    }

    /// One bias-corrected update over the same parameter list the optimizer
    /// was constructed with. Parameters with no gradient are skipped but
    /// their moments still decay.
    pub fn step(&mut self, params: &[Tensor<E>]) {
        assert_eq!(params.len(), self.slots.len(), "parameter list changed");
        self.step_count += 1;
        let t = self.step_count;
        adam_step(params, &mut self.slots, &self.config, t);
    }

    /// Moment buffers, exposed for checkpointing.
    pub fn slots(&self) -> &[(Vec<E>, Vec<E>)] {
        &self.slots
    }

    /// Restore optimizer state saved by a checkpoint.
    pub fn restore(&mut self, step_count: u64, slots: Vec<(Vec<E>, Vec<E>)>) {
        assert_eq!(slots.len(), self.slots.len(), "slot count mismatch");
        for (new, old) in slots.iter().zip(self.slots.iter()) {
            assert_eq!(new.0.len(), old.0.len(), "slot size mismatch");
        }
        self.step_count = step_count;
        self.slots = slots;
    }
}

/// Standard Adam update at step `step_count` (1-based, used for bias
/// correction). Exposed separately so tests can drive it directly.
pub fn adam_step<E: Elem>(
    params: &[Tensor<E>],
    slots: &mut [(Vec<E>, Vec<E>)],
    config: &OptimizerConfig,
    step_count: u64,
) {
    assert!(step_count >= 1, "step count is 1-based");
    let b1 = E::from_f64(config.beta1);
    let b2 = E::from_f64(config.beta2);
    let one = E::ONE;
    let lr = E::from_f64(config.learning_rate);
    let eps = E::from_f64(config.epsilon);
    let bc1 = E::from_f64(1.0 - config.beta1.powi(step_count as i32));
    let bc2 = E::from_f64(1.0 - config.beta2.powi(step_count as i32));

    for (param, (m, v)) in params.iter().zip(slots.iter_mut()) {
        let grad = param.grad();
        match grad {
            Some(g) => {
                param.with_data_mut(|data| {
                    for i in 0..data.len() {
                        let gi = g[i];
                        m[i] = b1 * m[i] + (one - b1) * gi;
                        v[i] = b2 * v[i] + (one - b2) * gi * gi;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        data[i] = data[i] - lr * mhat / (vhat.sqrt() + eps);
                    }
                });
            }
            None => {
                // No gradient reached this parameter; moments still decay.
                for i in 0..m.len() {
                    m[i] = b1 * m[i];
                    v[i] = b2 * v[i];
                }
            }
        }
    }
}
