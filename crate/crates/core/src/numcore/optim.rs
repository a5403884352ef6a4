use serde::{Deserialize, Serialize};

use super::tensor::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam, no weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &[f64]> {
        self.second_moment.iter().map(Vec::as_slice)
    }

    /// Applies one update using the grads stored on every parameter, then
    /// clears them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first_moment.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} tensors, store has {}",
                self.first_moment.len(),
                store.len()
            )));
        }
        if let Some((name, _)) = store.iter().find(|(_, t)| t.grad().is_none()) {
            return Err(Error::Usage(format!("parameter `{name}` has no gradient")));
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for (k, (_, tensor)) in store.iter_mut().enumerate() {
            let grad = tensor.grad().expect("checked above").to_vec();
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            let values = tensor.values_mut();
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            tensor.clear_grad();
        }
        Ok(())
    }
}

/// Rescales all grads so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .filter_map(|(_, t)| t.grad())
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for (_, t) in store.iter_mut() {
            if let Some(g) = t.grad().map(|g| g.iter().map(|x| x * s).collect::<Vec<_>>()) {
                t.zero_grad();
                t.accumulate_grad(&g);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::DiffTensor;

    #[test]
    fn missing_grad_is_usage_error() {
        let mut store = ParamStore::new();
        store.add("w", DiffTensor::from_vec(vec![1.0]));
        let mut adam = AdamState::new(&store, AdamConfig::default());
        assert!(matches!(adam.step(&mut store), Err(Error::Usage(_))));
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn zero_grad_is_fixed_point() {
        let mut store = ParamStore::new();
        let id = store.add("w", DiffTensor::from_vec(vec![1.5, -2.0]));
        let mut adam = AdamState::new(&store, AdamConfig::default());
        for k in 1..=3 {
            store.zero_grads();
            adam.step(&mut store).unwrap();
            assert_eq!(adam.step_count(), k);
        }
        assert_eq!(store.get(id).values(), &[1.5, -2.0]);
        assert!(store.get(id).grad().is_none());
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", DiffTensor::from_vec(vec![0.0, 0.0]));
        let mut adam = AdamState::new(&store, AdamConfig::default());
        store.get_mut(id).accumulate_grad(&[3.0, -0.02]);
        adam.step(&mut store).unwrap();
        let w = store.get(id).values();
        assert!((w[0] + 1e-3).abs() < 1e-11);
        assert!((w[1] - 1e-3).abs() < 1e-9);
        assert!(adam.second_moments().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut store = ParamStore::new();
        let id = store.add("w", DiffTensor::from_vec(vec![0.0, 0.0]));
        store.get_mut(id).accumulate_grad(&[3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut store, 1.0), 5.0);
        let g = store.get(id).grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
