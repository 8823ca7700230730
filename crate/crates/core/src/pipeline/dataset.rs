use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestRow, Split};
use crate::diffcore::{name_key, stream_rng};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::retrieval::EARTH_RADIUS_M;
use crate::synthproxy::write_rgb;
use crate::Tensor;

const ORIGIN: (f64, f64) = (40.4406, -79.9959);
const CLUSTER_OFFSET_M: f64 = 5000.0;
const PATTERN_WAVES: usize = 3;
const MIN_SIDE: usize = 5;

/// Parameters of the synthetic cross-view benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub test_per_cluster: usize,
    /// Ground views are `ground_height × ground_width`, aerial views square.
    pub ground_height: usize,
    pub ground_width: usize,
    pub aerial_size: usize,
    pub latent_dim: usize,
    /// Trailing latent dimensions rendered only into the aerial view.
    pub complementary_dims: usize,
    /// Scales both the per-sample latent jitter and the pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clusters: 3,
            per_cluster: 100,
            test_per_cluster: 20,
            ground_height: 8,
            ground_width: 32,
            aerial_size: 16,
            latent_dim: 8,
            complementary_dims: 6,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// One rendered sample, pixels already on the 8-bit grid.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub id: String,
    pub split: Split,
    pub ground: Tensor,
    pub aerial: Tensor,
    pub geo: (f64, f64),
}

/// Smooth spatial basis: one 3×H×W pattern per latent dimension.
struct Basis {
    patterns: Vec<Vec<f64>>,
    shape: [usize; 3],
}

impl Basis {
    fn new(rng: &mut ChaCha8Rng, dims: usize, h: usize, w: usize) -> Self {
        let patterns = (0..dims)
            .map(|_| {
                let waves: Vec<[f64; 5]> = (0..3 * PATTERN_WAVES)
                    .map(|_| {
                        [
                            rng.random_range(0..3) as f64,
                            rng.random_range(0..3) as f64 + 1.0,
                            rng.random_range(0.0..2.0 * PI),
                            rng.random_range(0.5..1.0),
                            if rng.random::<bool>() { 1.0 } else { -1.0 },
                        ]
                    })
                    .collect();
                let mut p = vec![0.0; 3 * h * w];
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            let v: f64 = waves[c * PATTERN_WAVES..(c + 1) * PATTERN_WAVES]
                                .iter()
                                .map(|[fy, fx, ph, amp, sx]| {
                                    amp * (2.0 * PI * (fy * y as f64 / h as f64 + sx * fx * x as f64 / w as f64) + ph).sin()
                                })
                                .sum();
                            p[(c * h + y) * w + x] = v;
                        }
                    }
                }
                let rms = (p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt().max(1e-12);
                p.iter_mut().for_each(|v| *v /= rms);
                p
            })
            .collect();
        Self { patterns, shape: [3, h, w] }
    }

    fn render(&self, z: &[f64], pixel_noise: f64, rng: &mut ChaCha8Rng) -> Tensor {
        let gain = 0.2 / (z.len() as f64).sqrt();
        let n: usize = self.shape.iter().product();
        let data = (0..n)
            .map(|i| {
                let s: f64 = z.iter().zip(&self.patterns).map(|(zd, p)| zd * p[i]).sum();
                let eps: f64 = StandardNormal.sample(rng);
                let v = (0.5 + gain * s + pixel_noise * eps).clamp(0.0, 1.0);
                (v * 255.0).round() / 255.0
            })
            .collect();
        Tensor::new(&self.shape, data).expect("basis shape")
    }
}

fn offset_deg(north_m: f64, east_m: f64) -> (f64, f64) {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * ORIGIN.0.to_radians().cos())).to_degrees();
    (ORIGIN.0 + dlat, ORIGIN.1 + dlon)
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(Error::Config(format!("need at least 2 clusters, got {}", self.clusters)));
        }
        if self.per_cluster < 1 {
            return Err(Error::Config("per_cluster must be ≥ 1".into()));
        }
        if self.latent_dim == 0 || self.complementary_dims > self.latent_dim {
            return Err(Error::Config(format!(
                "complementary_dims {} must not exceed latent_dim {}",
                self.complementary_dims, self.latent_dim
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be ≥ 0, got {}", self.noise)));
        }
        for (what, h, w) in [
            ("ground", self.ground_height, self.ground_width),
            ("aerial", self.aerial_size, self.aerial_size),
        ] {
            if h < MIN_SIDE || w < MIN_SIDE {
                return Err(Error::Config(format!(
                    "{what} images {h}×{w} are too small; both sides need at least {MIN_SIDE} pixels for edge maps"
                )));
            }
            EncoderConfig::toy(3, h, w)
                .block_shapes()
                .map_err(|e| Error::Config(format!("{what} images {h}×{w} are too small for the toy encoder: {e}")))?;
        }
        Ok(())
    }

    /// Renders every sample in memory: training samples first, cluster by
    /// cluster, then the held-out samples.
    pub fn render(&self) -> Result<Vec<SyntheticSample>> {
        self.validate()?;
        let mut rng = stream_rng(self.seed, name_key("synthetic.basis"), 0);
        let ground_basis = Basis::new(&mut rng, self.latent_dim, self.ground_height, self.ground_width);
        let aerial_basis = Basis::new(&mut rng, self.latent_dim, self.aerial_size, self.aerial_size);
        let prototypes: Vec<Vec<f64>> = (0..self.clusters)
            .map(|_| (0..self.latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let shared = self.latent_dim - self.complementary_dims;
        let jitter = 1.2 * self.noise;
        let pixel_noise = 0.04 * self.noise;
        let per = self.per_cluster + self.test_per_cluster;
        let cols = (per as f64).sqrt().ceil() as usize;

        let jobs: Vec<(Split, usize, usize)> = [(Split::Train, 0, self.per_cluster), (Split::Test, self.per_cluster, per)]
            .into_iter()
            .flat_map(|(split, lo, hi)| (0..self.clusters).flat_map(move |c| (lo..hi).map(move |i| (split, c, i))))
            .collect();
        Ok(jobs
            .into_par_iter()
            .map(|(split, c, i)| {
                let mut rng = stream_rng(self.seed, name_key("synthetic.sample"), (c * per + i) as u64);
                let z: Vec<f64> = prototypes[c]
                    .iter()
                    .map(|p| p + jitter * { let e: f64 = StandardNormal.sample(&mut rng); e })
                    .collect();
                let mut zg = z.clone();
                zg[shared..].iter_mut().for_each(|v| *v = 0.0);
                let ground = ground_basis.render(&zg, pixel_noise, &mut rng);
                let aerial = aerial_basis.render(&z, pixel_noise, &mut rng);
                let spacing = 10.0 * (c + 1) as f64;
                let geo = offset_deg(
                    c as f64 * CLUSTER_OFFSET_M + (i / cols) as f64 * spacing,
                    (i % cols) as f64 * spacing,
                );
                let local = if split == Split::Train { i } else { i - self.per_cluster };
                SyntheticSample { id: format!("{split}-c{c}-{local:04}"), split, ground, aerial, geo }
            })
            .collect())
    }
}

/// Train and test manifests of a generated benchmark.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub train: Manifest,
    pub test: Manifest,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
}

/// Writes `images/*.ppm`, `train.csv` and `test.csv` under `out`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out: impl AsRef<Path>) -> Result<SyntheticDataset> {
    let out = out.as_ref();
    let samples = spec.render()?;
    let images = out.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let rows: Vec<(Split, ManifestRow)> = samples
        .par_iter()
        .map(|s| {
            let ground = images.join(format!("{}_g.ppm", s.id));
            let aerial = images.join(format!("{}_a.ppm", s.id));
            write_rgb(&ground, &s.ground)?;
            write_rgb(&aerial, &s.aerial)?;
            Ok((s.split, ManifestRow { id: s.id.clone(), ground, aerial, synth: None, geo: Some(s.geo) }))
        })
        .collect::<Result<_>>()?;
    let pick = |split| Manifest {
        split,
        rows: rows.iter().filter(|(s, _)| *s == split).map(|(_, r)| r.clone()).collect(),
    };
    let ds = SyntheticDataset {
        train: pick(Split::Train),
        test: pick(Split::Test),
        train_path: out.join("train.csv"),
        test_path: out.join("test.csv"),
    };
    ds.train.write(&ds.train_path)?;
    ds.test.write(&ds.test_path)?;
    Ok(ds)
}
