use serde::{Deserialize, Serialize};

use crate::encoders::is_decayed;
use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam step with decoupled weight decay
/// (`w -= lr·λ·w` on decayed arrays before the moment update).
pub fn adam_step(params: &mut ParamStore, grads: &ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::invalid("optimizer state does not match the parameters"));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (name, w) in params.iter_mut() {
        let g = grads
            .try_get(name)
            .ok_or_else(|| Error::invalid(format!("no gradient for `{name}`")))?;
        if g.shape() != w.shape() {
            return Err(Error::invalid(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                w.shape()
            )));
        }
        let m = state.m.get_mut(name);
        let decay = if is_decayed(name) {
            cfg.learning_rate * cfg.weight_decay
        } else {
            0.0
        };
        let m = m.data_mut();
        let v = state.v.get_mut(name).data_mut();
        for (((w, &g), m), v) in w
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *w -= decay * *w;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *w -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar(name: &str, v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert(name, Tensor::from_vec(&[1], vec![v]).unwrap());
        p
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut p = scalar("x.bias", 0.7);
        let g = scalar("x.bias", 0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p.get("x.bias").data()[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar("x.bias", 0.0);
        let g = scalar("x.bias", 1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        let step = p.get("x.bias").data()[0];
        assert!((step + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn decay_applies_only_to_weights() {
        let cfg = AdamConfig {
            weight_decay: 0.5,
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        for (name, want) in [
            ("a.weight", 1.0 - 0.05),
            ("a.bias", 1.0),
            ("a.gamma", 1.0),
            ("a.pos_embed", 1.0),
        ] {
            let mut p = scalar(name, 1.0);
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &scalar(name, 0.0), &mut s, &cfg).unwrap();
            assert_eq!(p.get(name).data()[0], want, "{name}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar("w.weight", 1.0);
        let mut g = ParamStore::new();
        g.insert("w.weight", Tensor::zeros(&[2]));
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, &AdamConfig::default()).is_err());
    }
}
