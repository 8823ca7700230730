use crate::error::{dim_err, Error, Result};
use crate::Tensor;

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height * width != pixels.len() {
            return Err(dim_err!("{height}×{width} image needs {} pixels, got {}", height * width, pixels.len()));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Data(format!(
                "pixel ({}, {}) = {} is outside [0, 1]",
                i / width.max(1),
                i % width.max(1),
                pixels[i]
            )));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Binary edge map; every pixel is 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height * width != pixels.len() {
            return Err(dim_err!("{height}×{width} edge map needs {} pixels, got {}", height * width, pixels.len()));
        }
        if pixels.iter().any(|&p| p > 1) {
            return Err(Error::Data("edge map values must be 0 or 1".into()));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, pixels: vec![0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.pixels[y * self.width + x] == 1
    }

    pub(crate) fn set(&mut self, y: usize, x: usize) {
        self.pixels[y * self.width + x] = 1;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    /// `(y, x)` of every on-pixel in raster order.
    pub fn on_pixels(&self) -> Vec<(usize, usize)> {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == 1)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn is_subset_of(&self, other: &EdgeMap) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| a <= b)
    }
}

fn chw(t: &Tensor, channels: usize) -> Result<(usize, usize)> {
    match t.shape() {
        &[c, h, w] if c == channels => Ok((h, w)),
        s => Err(dim_err!("expected a {channels}×H×W tensor, got {s:?}")),
    }
}

pub fn to_grayscale(rgb: &Tensor) -> Result<GrayImage> {
    let (h, w) = chw(rgb, 3)?;
    let d = rgb.data();
    if let Some(i) = d.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Data(format!("rgb value {} at flat index {i} is outside [0, 1]", d[i])));
    }
    let n = h * w;
    let pixels = (0..n)
        .map(|i| {
            let v = LUMA_WEIGHTS[0] * d[i] + LUMA_WEIGHTS[1] * d[n + i] + LUMA_WEIGHTS[2] * d[2 * n + i];
            v.clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(h, w, pixels)
}

/// Appends the edge map as a fourth channel: R, G, B, edge.
pub fn stack_4channel(rgb: &Tensor, edges: &EdgeMap) -> Result<Tensor> {
    let (h, w) = chw(rgb, 3)?;
    if (h, w) != (edges.height, edges.width) {
        return Err(dim_err!("rgb is {h}×{w} but edge map is {}×{}", edges.height, edges.width));
    }
    let mut data = Vec::with_capacity(4 * h * w);
    data.extend_from_slice(rgb.data());
    data.extend(edges.pixels.iter().map(|&p| f64::from(p)));
    Tensor::new(&[4, h, w], data)
}
