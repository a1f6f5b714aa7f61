//! AdamW with decoupled weight decay.

use crate::error::{NnetError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| vec![0.0; store.get(id).len()])
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One optimizer step. Every gradient is checked for finiteness before any
/// parameter is touched, so a failed step leaves `store` and `state` intact.
pub fn adamw_step(
    store: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamWState,
    cfg: &AdamWConfig,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(NnetError::ShapeMismatch {
            op: "adamw_step",
            expected: vec![store.len()],
            got: vec![grads.len(), state.m.len()],
        });
    }
    for (id, g) in store.ids().zip(grads) {
        if g.len() != store.get(id).len() || state.m[id.index()].len() != g.len() {
            return Err(NnetError::ShapeMismatch {
                op: "adamw_step",
                expected: store.get(id).shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(NnetError::NonFiniteGradient(store.name(id).to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let i = id.index();
        let g = grads[i].data();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let p = store.get_mut(id).data_mut();
        for k in 0..p.len() {
            p[k] *= decay;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            p[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(value));
        s
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut s = single(0.7);
        let mut st = AdamWState::new(&s);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut s, &[Tensor::scalar(0.0)], &mut st, &cfg).unwrap();
        assert_eq!(s.by_name("x").unwrap().item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias correction makes m̂ = g and v̂ = g², so the step is lr·g/(|g|+eps).
        let mut s = single(1.0);
        let mut st = AdamWState::new(&s);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut s, &[Tensor::scalar(1.0)], &mut st, &cfg).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((s.by_name("x").unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_scales_parameter() {
        let mut s = single(2.0);
        let mut st = AdamWState::new(&s);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..Default::default()
        };
        adamw_step(&mut s, &[Tensor::scalar(0.0)], &mut st, &cfg).unwrap();
        assert!((s.by_name("x").unwrap().item() - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn nonfinite_gradient_names_parameter() {
        let mut s = single(1.0);
        let mut st = AdamWState::new(&s);
        let err = adamw_step(
            &mut s,
            &[Tensor::scalar(f64::NAN)],
            &mut st,
            &AdamWConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, NnetError::NonFiniteGradient("x".into()));
        assert_eq!(st.step, 0);
        assert_eq!(s.by_name("x").unwrap().item(), 1.0);
    }
}
