use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second moment estimates per parameter plus the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of every parameter named in `grads`.
///
/// The whole step is rejected, leaving `params` and `state` untouched, if
/// any gradient is non-finite or misshapen.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Vec<f64>>,
    state: &mut AdamState,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named `{name}`")))?;
        if p.len() != g.len() {
            return Err(Error::shape(
                "adam_step",
                format!("`{name}` has {} values, gradient {}", p.len(), g.len()),
            ));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above").data_mut();
        let mo = state.moments.entry(name.clone()).or_insert_with(|| Moments {
            m: vec![0.0; g.len()],
            v: vec![0.0; g.len()],
        });
        for i in 0..g.len() {
            mo.m[i] = beta1 * mo.m[i] + (1.0 - beta1) * g[i];
            mo.v[i] = beta2 * mo.v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = mo.m[i] / bc1;
            let v_hat = mo.v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn single(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = single(0.7);
        let mut s = AdamState::new(AdamConfig::default());
        let g = BTreeMap::from([("w".to_string(), vec![0.0])]);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut s).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data(), &[0.7]);
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε) ≈ lr.
        let mut p = single(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut s = AdamState::new(cfg);
        let g = BTreeMap::from([("w".to_string(), vec![1.0])]);
        adam_step(&mut p, &g, &mut s).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().data()[0] - expected).abs() < 1e-15);
        assert!((p.get("w").unwrap().data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn identical_params_stay_identical() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::vector(&[0.3, -0.2]));
        p.insert("b", Tensor::vector(&[0.3, -0.2]));
        let mut s = AdamState::new(AdamConfig::default());
        let g = BTreeMap::from([
            ("a".to_string(), vec![0.5, -1.5]),
            ("b".to_string(), vec![0.5, -1.5]),
        ]);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut s).unwrap();
        }
        assert_eq!(p.get("a").unwrap().data(), p.get("b").unwrap().data());
    }

    #[test]
    fn non_finite_gradient_is_rejected_atomically() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::scalar(1.0));
        p.insert("b", Tensor::scalar(1.0));
        let before = p.clone();
        let mut s = AdamState::new(AdamConfig::default());
        let g = BTreeMap::from([
            ("a".to_string(), vec![1.0]),
            ("b".to_string(), vec![f64::NAN]),
        ]);
        let err = adam_step(&mut p, &g, &mut s).unwrap_err();
        assert!(err.to_string().contains("`b`"), "{err}");
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 0);
    }
}
