//! Adam with bias correction under an inverse-square-root warmup schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Optimiser hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    /// Scale factor of the warmup schedule.
    pub lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1.0,
            warmup_steps: 4000,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Moments and step counter for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub model_dim: usize,
}

impl AdamState {
    pub fn new(params: &ParamSet, cfg: &AdamConfig, model_dim: usize) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            base_lr: cfg.lr,
            warmup_steps: cfg.warmup_steps,
            model_dim,
        }
    }

    /// Learning rate applied at step `t` (1-based).
    pub fn learning_rate(&self, t: u64) -> f64 {
        inverse_sqrt_lr(self.base_lr, self.model_dim, self.warmup_steps, t)
    }
}

/// `lr · d^-0.5 · min(t^-0.5, t · warmup^-1.5)`.
pub fn inverse_sqrt_lr(lr: f64, model_dim: usize, warmup: u64, t: u64) -> f64 {
    let t = t.max(1) as f64;
    let w = warmup.max(1) as f64;
    lr * (model_dim as f64).powf(-0.5) * t.powf(-0.5).min(t * w.powf(-1.5))
}

/// One Adam update. A non-finite gradient rejects the whole step and leaves
/// parameters and state untouched.
pub fn adam_step(params: &mut ParamSet, grads: &[Vec<f64>], state: &mut AdamState) -> Result<f64> {
    if grads.len() != params.len() || !state.m.same_layout(params) {
        return Err(Error::Shape("adam: parameter/gradient/moment layout differs".into()));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if g.len() != p.len() {
            return Err(Error::Shape(format!("adam: gradient size for `{name}`")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { name: name.to_string() });
        }
    }
    state.t += 1;
    let t = state.t;
    let lr = state.learning_rate(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (i, g) in grads.iter().enumerate() {
        let p = params.get_mut(i).data_mut();
        let m = state.m.get_mut(i).data_mut();
        let v = state.v.get_mut(i).data_mut();
        for k in 0..g.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("theta", Tensor::scalar(v));
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = ParamSet::new();
        p.push("a", Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 3.0]));
        let before = p.clone();
        let mut st = AdamState::new(&p, &AdamConfig::default(), 4);
        for _ in 0..5 {
            adam_step(&mut p, &[vec![0.0; 4]], &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert!(st.m.tensors()[0].data().iter().all(|&x| x == 0.0));
        assert_eq!(st.t, 5);
    }

    #[test]
    fn single_step_by_hand() {
        let cfg = AdamConfig {
            lr: 1.0,
            warmup_steps: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-9,
        };
        let mut p = one(0.0);
        let mut st = AdamState::new(&p, &cfg, 16);
        let alpha = adam_step(&mut p, &[vec![1.0]], &mut st).unwrap();
        // 16^-0.5 * min(1, 1 * 10^-1.5)
        let expect_alpha = 0.25 * 10f64.powf(-1.5);
        assert!((alpha - expect_alpha).abs() < 1e-15);
        assert!((st.m.get(0).data()[0] - 0.1).abs() < 1e-15);
        assert!((st.v.get(0).data()[0] - 0.001).abs() < 1e-15);
        let update = p.get(0).data()[0];
        assert!((update + alpha).abs() < 1e-9 * alpha.max(1.0));
    }

    #[test]
    fn identical_inputs_identical_results() {
        let cfg = AdamConfig::default();
        let mut a = one(0.3);
        let mut b = one(0.3);
        let mut sa = AdamState::new(&a, &cfg, 8);
        let mut sb = AdamState::new(&b, &cfg, 8);
        for g in [0.1, -0.4, 2.0] {
            adam_step(&mut a, &[vec![g]], &mut sa).unwrap();
            adam_step(&mut b, &[vec![g]], &mut sb).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = one(1.0);
        let mut st = AdamState::new(&p, &AdamConfig::default(), 8);
        let err = adam_step(&mut p, &[vec![f64::NAN]], &mut st).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(st.t, 0);
        assert_eq!(p.get(0).data()[0], 1.0);
    }

    #[test]
    fn schedule_peaks_at_warmup() {
        let lr = |t| inverse_sqrt_lr(1.0, 512, 4000, t);
        assert!(lr(3999) < lr(4000));
        assert!(lr(4001) < lr(4000));
        assert!((lr(4000) - 512f64.powf(-0.5) * 4000f64.powf(-0.5)).abs() < 1e-15);
    }
}
