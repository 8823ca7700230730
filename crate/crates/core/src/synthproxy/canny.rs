use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::image::{EdgeMap, GrayImage};
use crate::error::{dim_err, param_err, Result};

const KERNEL: usize = 5;
/// Relative slack under which two magnitudes count as a tie in suppression.
const TIE_TOL: f64 = 1e-9;

/// Blur width and hysteresis thresholds. `low`/`high` are fractions of the
/// largest gradient magnitude in the image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { sigma: 1.4, low: 0.1, high: 0.3 }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(param_err!("canny sigma must be positive, got {}", self.sigma));
        }
        if !(self.low > 0.0 && self.low < self.high && self.high <= 1.0) {
            return Err(param_err!("canny thresholds need 0 < low < high <= 1, got low={} high={}", self.low, self.high));
        }
        Ok(())
    }
}

/// Intermediate stages of one detector run.
#[derive(Clone, Debug)]
pub struct CannyTrace {
    pub magnitude: Vec<f64>,
    pub suppressed: Vec<f64>,
    pub max_magnitude: f64,
    /// Pixels passing the low threshold after suppression (weak ∪ strong).
    pub candidates: EdgeMap,
    pub edges: EdgeMap,
}

pub fn canny(img: &GrayImage, params: &CannyParams) -> Result<EdgeMap> {
    Ok(canny_trace(img, params)?.edges)
}

fn gaussian_kernel(sigma: f64) -> [f64; KERNEL] {
    let r = (KERNEL / 2) as f64;
    let mut k = [0.0; KERNEL];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (KERNEL / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..KERNEL)
                .map(|t| k[t] * src[y * w + clamp_idx(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..KERNEL)
                .map(|t| k[t] * tmp[clamp_idx(y as isize + t as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn sobel(src: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |y: isize, x: isize| src[clamp_idx(y, h) * w + clamp_idx(x, w)];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[i] = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    (gx, gy)
}

/// Neighbour offsets `(dy, dx)` along the quantized gradient direction.
fn direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut a = gy.atan2(gx).to_degrees();
    if a < 0.0 {
        a += 180.0;
    }
    if !(22.5..157.5).contains(&a) {
        (0, 1)
    } else if a < 67.5 {
        (1, 1)
    } else if a < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

pub fn canny_trace(img: &GrayImage, params: &CannyParams) -> Result<CannyTrace> {
    params.validate()?;
    let (h, w) = (img.height(), img.width());
    if h < KERNEL || w < KERNEL {
        return Err(dim_err!("canny needs at least {KERNEL}×{KERNEL} pixels, got {h}×{w}"));
    }
    let smooth = blur(img.pixels(), h, w, params.sigma);
    let (gx, gy) = sobel(&smooth, h, w);
    let magnitude: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max_magnitude = magnitude.iter().copied().fold(0.0, f64::max);

    // the one-pixel frame has no full neighbourhood and stays at zero
    let mut suppressed = vec![0.0; h * w];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = magnitude[i];
            if m == 0.0 {
                continue;
            }
            let (dy, dx) = direction(gx[i], gy[i]);
            let a = magnitude[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            let b = magnitude[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
            let floor = m * (1.0 + TIE_TOL);
            if floor >= a && floor >= b {
                suppressed[i] = m;
            }
        }
    }

    let mut candidates = EdgeMap::zeros(h, w);
    let mut edges = EdgeMap::zeros(h, w);
    if max_magnitude > 0.0 {
        let low = params.low * max_magnitude;
        let high = params.high * max_magnitude;
        let mut queue = VecDeque::new();
        for (i, &m) in suppressed.iter().enumerate() {
            if m > 0.0 && m >= low {
                candidates.set(i / w, i % w);
                if m >= high {
                    edges.set(i / w, i % w);
                    queue.push_back(i);
                }
            }
        }
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / w, i % w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if candidates.get(ny, nx) && !edges.get(ny, nx) {
                        edges.set(ny, nx);
                        queue.push_back(ny * w + nx);
                    }
                }
            }
        }
    }
    Ok(CannyTrace { magnitude, suppressed, max_magnitude, candidates, edges })
}
