use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Grads, ParameterStore, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub cfg: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(store: &ParameterStore<S>, cfg: AdamConfig) -> Self {
        let zeros = || store.values().iter().map(|t| Tensor::zeros(&t.shape)).collect();
        OptimizerState {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns the
/// norm before clipping and whether clipping happened.
pub fn clip_grad_norm<S: Scalar>(grads: &mut Grads<S>, max_norm: f64) -> (f64, bool) {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(S::lit(max_norm / norm));
        (norm, true)
    } else {
        (norm, false)
    }
}

/// Bias-corrected Adam update of every trainable parameter; frozen ones are
/// left untouched. Gradients are zeroed afterward.
pub fn adam_step<S: Scalar>(store: &mut ParameterStore<S>, state: &mut OptimizerState<S>) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} tensors, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    for id in store.ids() {
        if store.is_trainable(id) && !store.grads().get(id).data.iter().all(|g| g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient for parameter {}", store.name(id))));
        }
    }
    state.step += 1;
    let c = state.cfg;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
    let (one_b1, one_b2) = (S::lit(1.0 - c.beta1), S::lit(1.0 - c.beta2));
    let (inv_bc1, inv_bc2) = (S::lit(1.0 / bc1), S::lit(1.0 / bc2));
    let (lr, eps) = (S::lit(c.lr), S::lit(c.eps));
    let grads = store.take_grads();
    for id in store.ids().collect::<Vec<_>>() {
        if !store.is_trainable(id) {
            continue;
        }
        let g = &grads.get(id).data;
        let m = &mut state.m[id.0].data;
        let v = &mut state.v[id.0].data;
        let p = &mut store.value_mut(id).data;
        for k in 0..p.len() {
            m[k] = b1 * m[k] + one_b1 * g[k];
            v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
            let mhat = m[k] * inv_bc1;
            let vhat = v[k] * inv_bc2;
            p[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    store.put_grads(grads);
    store.zero_grads();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Init, Layout};

    fn scalar_store(v: f64) -> ParameterStore<f64> {
        let mut l = Layout::new();
        l.add("x", &[1], Init::Zeros);
        let mut s = ParameterStore::init(&l, 0);
        s.value_mut(s.id("x").unwrap()).data[0] = v;
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7);
        let mut st = OptimizerState::new(&s, AdamConfig::with_lr(0.1));
        adam_step(&mut s, &mut st).unwrap();
        assert_eq!(s.values()[0].data[0], 0.7);
    }

    #[test]
    fn first_step_hand_value() {
        let mut s = scalar_store(0.0);
        let id = s.id("x").unwrap();
        s.grads_mut().mat_mut(id)[[0, 0]] = 1.0;
        let mut st = OptimizerState::new(&s, AdamConfig::with_lr(0.1));
        adam_step(&mut s, &mut st).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((s.values()[0].data[0] - want).abs() < 1e-15);
        assert_eq!(s.grads().get(id).data[0], 0.0);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        let id = s.id("x").unwrap();
        s.grads_mut().mat_mut(id)[[0, 0]] = f64::NAN;
        let mut st = OptimizerState::new(&s, AdamConfig::with_lr(0.1));
        let err = adam_step(&mut s, &mut st).unwrap_err().to_string();
        assert!(err.contains("parameter x"), "{err}");
    }

    #[test]
    fn frozen_parameters_untouched() {
        let mut s = scalar_store(0.5);
        let id = s.id("x").unwrap();
        s.set_trainable(id, false);
        s.grads_mut().mat_mut(id)[[0, 0]] = 3.0;
        let mut st = OptimizerState::new(&s, AdamConfig::with_lr(0.1));
        adam_step(&mut s, &mut st).unwrap();
        assert_eq!(s.values()[0].data[0], 0.5);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut s = scalar_store(0.0);
        let id = s.id("x").unwrap();
        s.grads_mut().mat_mut(id)[[0, 0]] = -12.0;
        let mut g = s.take_grads();
        assert_eq!(clip_grad_norm(&mut g, 5.0), (12.0, true));
        assert!((g.global_norm() - 5.0).abs() < 1e-12);
        assert!(!clip_grad_norm(&mut g, 5.0).1);
    }
}
