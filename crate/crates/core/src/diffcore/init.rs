use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng::{name_key, stream_rng};
use super::Tensor;
use crate::scalar::Real;

/// Weight initialization distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitKind {
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    XavierUniform,
    Gaussian { mean: f64, std: f64 },
    /// Zero-mean uniform whose standard deviation is `std`, i.e. support `±std·√3`.
    UniformWithStd { std: f64 },
    Zeros,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn xavier(seed: u64) -> Self {
        Self::new(InitKind::XavierUniform, seed)
    }

    /// Draws a tensor for the parameter called `name`.
    ///
    /// The stream depends only on `(kind, seed, name, shape)`, so adding or
    /// resizing other parameters never perturbs this one.
    pub fn sample<T: Real>(&self, name: &str, shape: &[usize]) -> Tensor<T> {
        let mut rng = stream_rng(self.seed, name_key(name), shape.iter().product::<usize>() as u64);
        let (fan_in, fan_out) = fans(shape);
        match self.kind {
            InitKind::Zeros => Tensor::zeros(shape),
            InitKind::XavierUniform => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(shape, |_| T::c(rng.random_range(-bound..=bound)))
            }
            InitKind::UniformWithStd { std } => {
                let bound = std * 3f64.sqrt();
                Tensor::from_fn(shape, |_| T::c(rng.random_range(-bound..=bound)))
            }
            InitKind::Gaussian { mean, std } => {
                let normal = Normal::new(mean, std).expect("finite gaussian parameters");
                Tensor::from_fn(shape, |_| T::c(normal.sample(&mut rng)))
            }
        }
    }
}

/// Fan-in/fan-out for dense `[in, out]` and conv `[out, in, kh, kw]` layouts.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, *n),
        [din, dout] => (*din, *dout),
        [k, c, rest @ ..] => {
            let field: usize = rest.iter().product();
            (c * field, k * field)
        }
        [] => (1, 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_spec_same_values() {
        let spec = InitSpec::xavier(7);
        let a: Tensor<f64> = spec.sample("enc.conv0.w", &[4, 3, 3, 3]);
        let b: Tensor<f64> = spec.sample("enc.conv0.w", &[4, 3, 3, 3]);
        assert_eq!(a, b);
        let c: Tensor<f64> = spec.sample("enc.conv1.w", &[4, 3, 3, 3]);
        assert_ne!(a, c);
    }

    #[test]
    fn xavier_bound_respected() {
        let t: Tensor<f64> = InitSpec::xavier(1).sample("w", &[20, 30]);
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        let conv: Tensor<f64> = InitSpec::xavier(1).sample("k", &[8, 4, 3, 3]);
        let bound = (6.0f64 / (36.0 + 72.0)).sqrt();
        assert!(conv.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn uniform_with_std_moments() {
        let t: Tensor<f64> =
            InitSpec::new(InitKind::UniformWithStd { std: 0.005 }, 3).sample("fc", &[100_000]);
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 2e-4);
        assert!((0.0048..=0.0052).contains(&var.sqrt()), "std {}", var.sqrt());
        assert!(t.data().iter().all(|v| v.abs() <= 0.005 * 3f64.sqrt()));
    }
}
