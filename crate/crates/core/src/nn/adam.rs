use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Default step size for the convolutional models.
    pub const CONV_LR: f64 = 1e-4;
    /// Default step size for implicit representations.
    pub const INR_LR: f64 = 5e-4;

    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: Self::CONV_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_count: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        })
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "Adam state holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut state = AdamState::new(AdamConfig::with_lr(0.1), 1).unwrap();
        let mut theta = [0.0];
        state.step(&mut theta, &[1.0]).unwrap();
        assert!((theta[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::new(AdamConfig::default(), 3).unwrap();
        let mut theta = [1.0, -2.0, 3.5];
        state.step(&mut theta, &[0.0; 3]).unwrap();
        assert_eq!(theta, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn identical_gradients_identical_updates() {
        let mut state = AdamState::new(AdamConfig::default(), 2).unwrap();
        let mut theta = [0.25, 0.25];
        for g in [0.3, -1.2, 4.0] {
            state.step(&mut theta, &[g, g]).unwrap();
        }
        assert_eq!(theta[0], theta[1]);
    }

    #[test]
    fn rejects_mismatch() {
        let mut state = AdamState::new(AdamConfig::default(), 2).unwrap();
        assert!(state.step(&mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(AdamState::new(AdamConfig { beta1: 1.0, ..AdamConfig::default() }, 1).is_err());
    }
}
