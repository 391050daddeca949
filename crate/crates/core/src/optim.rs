//! AdamW optimizer over a flat parameter vector.
//!
//! Standard Adam moment estimates with bias correction, plus decoupled
//! weight decay applied directly to the parameters (not folded into the
//! gradient). A step-function learning-rate schedule multiplies the base
//! rate by a fixed factor from a given epoch onward.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Training-run hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
    /// 0-based epoch at which the learning rate is multiplied by
    /// `lr_decay_factor`; set at or beyond `epochs` to disable.
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
    /// Global-norm gradient clip applied before each update. Single hard
    /// samples can produce gradients orders of magnitude above typical ones
    /// and derail one-sample-per-step training; set very large to disable.
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epochs: 20,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
            lr_decay_epoch: 12,
            lr_decay_factor: 0.1,
            max_grad_norm: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::Config("decay factor must be positive".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }

    /// Scale `grads` down in place so its Euclidean norm is at most
    /// `max_grad_norm`; no-op for gradients already within the bound.
    pub fn clip_gradient(&self, grads: &mut [f64]) {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > self.max_grad_norm {
            let scale = self.max_grad_norm / norm;
            for g in grads.iter_mut() {
                *g *= scale;
            }
        }
    }

    /// Learning rate in effect during a 0-based epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }
}

/// Optimizer state: first/second moment estimates and the step counter.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(AdamW {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Apply one update in place with the given learning rate.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.cfg.beta1 * self.m[i] + (1.0 - self.cfg.beta1) * g;
            self.v[i] = self.cfg.beta2 * self.v[i] + (1.0 - self.cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * (m_hat / (v_hat.sqrt() + self.cfg.epsilon)
                + self.cfg.weight_decay * params[i]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig::default()
    }

    #[test]
    fn default_schedule_decays_once() {
        let c = cfg();
        assert_eq!(c.learning_rate_at(0), 2e-4);
        assert_eq!(c.learning_rate_at(11), 2e-4);
        assert!((c.learning_rate_at(12) - 2e-5).abs() < 1e-18);
        assert!((c.learning_rate_at(19) - 2e-5).abs() < 1e-18);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // With bias correction, step 1 gives m_hat = g, v_hat = g², so the
        // Adam part moves by lr · g/(|g| + eps) ≈ lr · sign(g).
        let mut c = cfg();
        c.weight_decay = 0.0;
        let mut opt = AdamW::new(c, 2).unwrap();
        let mut params = vec![1.0, -2.0];
        opt.step(&mut params, &[0.5, -0.25], 0.1).unwrap();
        let expected0 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        let expected1 = -2.0 - 0.1 * (-0.25) / (0.25 + 1e-8);
        assert!((params[0] - expected0).abs() < 1e-12);
        assert!((params[1] - expected1).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_is_decoupled_from_gradient() {
        // With zero gradient, Adam's moment update contributes nothing and
        // the parameter shrinks by exactly lr · wd · p per step.
        let mut c = cfg();
        c.weight_decay = 0.01;
        let mut opt = AdamW::new(c, 1).unwrap();
        let mut params = vec![3.0];
        opt.step(&mut params, &[0.0], 0.1).unwrap();
        assert!((params[0] - (3.0 - 0.1 * 0.01 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut opt = AdamW::new(cfg(), 3).unwrap();
        let mut params = vec![0.3, -0.7, 1.1];
        let before = params.clone();
        for _ in 0..5 {
            opt.step(&mut params, &[1.0, -1.0, 0.5], 0.0).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // Minimize f(p) = Σ (p - target)²; AdamW with small decay should get
        // close to the target.
        let targets = [1.5, -0.5, 3.0];
        let mut c = cfg();
        c.weight_decay = 0.0;
        let mut opt = AdamW::new(c, 3).unwrap();
        let mut params = vec![0.0; 3];
        for _ in 0..2000 {
            let grads: Vec<f64> = params
                .iter()
                .zip(&targets)
                .map(|(p, t)| 2.0 * (p - t))
                .collect();
            opt.step(&mut params, &grads, 0.01).unwrap();
        }
        for (p, t) in params.iter().zip(&targets) {
            assert!((p - t).abs() < 1e-3, "{p} vs {t}");
        }
    }

    #[test]
    fn clipping_rescales_only_oversized_gradients() {
        let mut c = cfg();
        c.max_grad_norm = 5.0;
        let mut big = vec![3.0, -4.0, 0.0, 0.0]; // norm 5 exactly: untouched
        c.clip_gradient(&mut big);
        assert_eq!(big, vec![3.0, -4.0, 0.0, 0.0]);
        let mut huge = vec![30.0, -40.0]; // norm 50 -> scaled to norm 5
        c.clip_gradient(&mut huge);
        assert!((huge[0] - 3.0).abs() < 1e-12);
        assert!((huge[1] + 4.0).abs() < 1e-12);
        let mut small = vec![0.1, 0.2];
        c.clip_gradient(&mut small);
        assert_eq!(small, vec![0.1, 0.2]);
    }

    #[test]
    fn size_mismatch_rejected() {
        let mut opt = AdamW::new(cfg(), 2).unwrap();
        let mut params = vec![0.0; 3];
        assert!(opt.step(&mut params, &[0.0; 3], 0.1).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg();
        c.beta1 = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.learning_rate = f64::NAN;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.weight_decay = -0.1;
        assert!(c.validate().is_err());
    }
}
