use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::rng::{mix, name_key, stream_rng};
use crate::error::{dim_err, param_err, Result};
use crate::Tensor;

/// Knobs of the stand-in synthesizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    /// ρ: weight of the true aerial view in the output.
    pub fidelity: f64,
    pub noise_std: f64,
    /// Channels overwritten by a fixed linear map of the ground view.
    pub complement_mask: BTreeSet<usize>,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self { fidelity: 0.5, noise_std: 0.1, complement_mask: BTreeSet::new(), seed: 0 }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(param_err!("proxy fidelity must lie in [0, 1], got {}", self.fidelity));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(param_err!("proxy noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        Ok(())
    }
}

fn content_key(t: &Tensor) -> u64 {
    t.data().iter().fold(name_key("proxy.ground"), |h, v| mix(h, v.to_bits(), 0))
}

/// Synthesizes an aerial view: `ρ·aerial + (1−ρ)·η`, masked channels taken
/// from the ground view, clipped to `[0, 1]`. The noise stream depends only
/// on the seed and the ground content.
pub fn proxy_synthesize(ground: &Tensor, paired_aerial: &Tensor, cfg: &ProxyConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (gc, gh, gw) = match ground.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(dim_err!("ground must be C×H×W, got {s:?}")),
    };
    let (ac, ah, aw) = match paired_aerial.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(dim_err!("aerial must be C×H×W, got {s:?}")),
    };
    if let Some(&c) = cfg.complement_mask.iter().find(|&&c| c >= ac) {
        return Err(param_err!("complement_mask channel {c} out of range for {ac} channels"));
    }
    let rho = cfg.fidelity;
    let a = paired_aerial.data();
    let mut out: Vec<f64> = if rho == 1.0 {
        a.to_vec()
    } else {
        let mut rng = stream_rng(cfg.seed, content_key(ground), 0);
        let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| param_err!("{e}"))?;
        a.iter().map(|&v| rho * v + (1.0 - rho) * normal.sample(&mut rng)).collect()
    };

    if !cfg.complement_mask.is_empty() {
        let plane = ah * aw;
        let g = ground.data();
        let mut wrng = stream_rng(cfg.seed, name_key("proxy.complement"), 0);
        for &c in &cfg.complement_mask {
            // convex mix of ground channels so the output stays in range
            let raw: Vec<f64> = (0..gc).map(|_| wrng.random_range(0.0..1.0) + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|v| v / s).collect();
            for y in 0..ah {
                let sy = y * gh / ah;
                for x in 0..aw {
                    let sx = x * gw / aw;
                    out[c * plane + y * aw + x] =
                        (0..gc).map(|k| weights[k] * g[k * gh * gw + sy * gw + sx]).sum();
                }
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::new(&[ac, ah, aw], out)
}
