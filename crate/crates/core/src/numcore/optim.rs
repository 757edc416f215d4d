use super::{NumError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![0.0; t.len()]).collect::<Vec<_>>();
        Adam { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from the accumulated gradients, then
    /// zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), NumError> {
        if !store.grads_ready() {
            return Err(NumError::State("no gradients accumulated since the last step".into()));
        }
        if store.len() != self.first.len() {
            return Err(NumError::State(format!(
                "optimizer tracks {} tensors, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((t, m), v) in store.tensors_mut().zip(&mut self.first).zip(&mut self.second) {
            if m.len() != t.len() {
                return Err(NumError::State(format!("moment size {} vs parameter {:?}", m.len(), t.shape())));
            }
            let grad = t
                .grad()
                .ok_or_else(|| NumError::State(format!("parameter {:?} has no gradient", t.shape())))?
                .to_vec();
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NumError::NonFinite("gradient".into()));
            }
            let data = t.data_mut();
            for i in 0..data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}
