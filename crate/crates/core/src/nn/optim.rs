use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam moments for every parameter of one store, in store order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let m: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    /// One bias-corrected Adam update of every parameter from its grad.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - f64::from(beta1).powi(self.t as i32);
        let bc2 = 1.0 - f64::from(beta2).powi(self.t as i32);
        let step_size = (f64::from(lr) / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        for (i, p) in store.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            let w = p.value.data_mut();
            for k in 0..w.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let denom = v[k].sqrt() / bc2_sqrt + epsilon;
                w[k] -= step_size * m[k] / denom;
            }
        }
    }
}

/// Global L2 norm of the listed grads, accumulated in f64.
pub fn grad_norm(store: &ParamStore, ids: &[ParamId]) -> f64 {
    ids.iter()
        .map(|&id| {
            store
                .grad(id)
                .data()
                .iter()
                .map(|&g| f64::from(g) * f64::from(g))
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales the listed grads so their global norm is at most `max_norm`.
/// Returns the applied factor (1 when nothing changed).
///
/// The factor is nudged down until the recomputed norm is within bound, so a
/// second call is always a no-op.
pub fn clip_grad_norm(store: &mut ParamStore, ids: &[ParamId], max_norm: f32) -> f32 {
    let max = f64::from(max_norm);
    let norm = grad_norm(store, ids);
    if norm <= max || norm == 0.0 {
        return 1.0;
    }
    let originals: Vec<Vec<f32>> = ids.iter().map(|&id| store.grad(id).data().to_vec()).collect();
    let mut factor = (max / norm) as f32;
    loop {
        for (&id, orig) in ids.iter().zip(&originals) {
            let g = store.get_mut(id).grad.data_mut();
            for (dst, &src) in g.iter_mut().zip(orig) {
                *dst = src * factor;
            }
        }
        if grad_norm(store, ids) <= max {
            return factor;
        }
        factor *= 1.0 - f32::EPSILON;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(vals: &[f32], grads: &[f32]) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::from_vec(vals.to_vec())).unwrap();
        s.get_mut(id).grad = Tensor::from_vec(grads.to_vec());
        (s, id)
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let (mut s, id) = store_with(&[0.5, -1.0], &[0.0, 0.0]);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        adam.step(&mut s);
        assert_eq!(s.value(id).data(), &[0.5, -1.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // m̂ = g, v̂ = g², so the update is lr * g / (|g| + eps).
        let (mut s, id) = store_with(&[0.0], &[1.0]);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        adam.step(&mut s);
        let expected = -0.001f64 * 1.0 / (1.0 + 1e-8);
        assert!((f64::from(s.value(id).data()[0]) - expected).abs() < 1e-9);
    }

    #[test]
    fn clip_three_four_five() {
        let (mut s, id) = store_with(&[0.0, 0.0], &[3.0, 4.0]);
        let f = clip_grad_norm(&mut s, &[id], 1.0);
        assert!((f - 0.2).abs() < 1e-6);
        let g = s.grad(id).data();
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn clip_zero_grad_is_noop() {
        let (mut s, id) = store_with(&[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(clip_grad_norm(&mut s, &[id], 1.0), 1.0);
        assert_eq!(s.grad(id).data(), &[0.0, 0.0]);
    }
}
