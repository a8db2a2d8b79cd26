use rand::Rng as _;

use super::Tensor;
use crate::rng::{self, Rng};

/// Weight initialization schemes. All draw from a symmetric uniform
/// distribution whose bound depends on the fan-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// First sine layer: `U(-1/in, 1/in)`.
    SirenFirst,
    /// Later sine layers: `U(-sqrt(6/in)/omega0, sqrt(6/in)/omega0)`.
    SirenHidden { omega0: f64 },
    /// ReLU and convolution layers: `U(-sqrt(6/in), sqrt(6/in))`.
    HeUniform,
    /// `U(-1/sqrt(in), 1/sqrt(in))`, used for Gaussian and Gabor layers and
    /// for biases.
    FanInUniform,
    Zeros,
}

impl InitScheme {
    pub fn bound(self, fan_in: usize) -> f64 {
        let n = fan_in as f64;
        match self {
            InitScheme::SirenFirst => 1.0 / n,
            InitScheme::SirenHidden { omega0 } => (6.0 / n).sqrt() / omega0,
            InitScheme::HeUniform => (6.0 / n).sqrt(),
            InitScheme::FanInUniform => 1.0 / n.sqrt(),
            InitScheme::Zeros => 0.0,
        }
    }

    pub fn sample(self, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
        let bound = self.bound(fan_in);
        let mut t = Tensor::zeros(shape);
        if bound > 0.0 {
            for v in t.data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        t
    }
}

/// Fresh weights of `shape` whose fan-in is the product of every axis but the
/// first, drawn from a stream keyed by `seed`.
pub fn init_layer(scheme: InitScheme, shape: &[usize], seed: u64) -> Tensor {
    let fan_in = shape[1..].iter().product::<usize>().max(1);
    scheme.sample(shape, fan_in, &mut rng::stream(seed, "init_layer"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn siren_hidden_bound() {
        let b = InitScheme::SirenHidden { omega0: 30.0 }.bound(256);
        assert!((b - 0.005_103).abs() < 1e-6, "{b}");
        assert_eq!(InitScheme::SirenFirst.bound(2), 0.5);
        assert_eq!(InitScheme::HeUniform.bound(6), 1.0);
    }

    #[test]
    fn deterministic_and_bounded() {
        let scheme = InitScheme::SirenHidden { omega0: 30.0 };
        let a = init_layer(scheme, &[64, 256], 3);
        let b = init_layer(scheme, &[64, 256], 3);
        assert_eq!(a, b);
        let bound = scheme.bound(256);
        assert!(a.data().iter().all(|v| v.abs() <= bound));
        assert_ne!(a, init_layer(scheme, &[64, 256], 4));
        assert!(init_layer(InitScheme::Zeros, &[3, 3], 1).data().iter().all(|&v| v == 0.0));
    }
}
