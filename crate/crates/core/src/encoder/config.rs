use serde::{Deserialize, Serialize};

use crate::diffcore::{ConvGeom, InitSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Layer stack of one view's encoder.
///
/// Each block is conv → ReLU, with dropout after the last `dropout_blocks`
/// blocks. Tapped block outputs (post-dropout) are flattened, or pooled
/// when `use_gap`, concatenated and projected to `embed_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv_blocks: Vec<ConvBlock>,
    /// Zero padding applied on every side of every conv.
    pub padding: usize,
    pub tap_layers: Vec<usize>,
    pub dropout_p: f64,
    pub dropout_blocks: usize,
    pub embed_dim: usize,
    pub multiscale: bool,
    pub use_gap: bool,
    /// Scale embeddings to unit norm. Off by default.
    pub normalize: bool,
    pub init: InitSpec,
}

impl EncoderConfig {
    /// Desk-scale preset: channels 16/32/32/64, 3×3 kernels, stride 2.
    pub fn toy(in_channels: usize, height: usize, width: usize) -> Self {
        let blocks = [16, 32, 32, 64]
            .into_iter()
            .map(|c| ConvBlock {
                out_channels: c,
                kernel: 3,
                stride: 2,
            })
            .collect();
        Self {
            in_channels,
            input_height: height,
            input_width: width,
            conv_blocks: blocks,
            padding: 1,
            tap_layers: vec![1, 2, 3],
            dropout_p: 0.5,
            dropout_blocks: 3,
            embed_dim: 64,
            multiscale: true,
            use_gap: false,
            normalize: false,
            init: InitSpec::xavier(0),
        }
    }

    /// Eight 4×4/stride-2 blocks with a 1000-d embedding.
    pub fn full(in_channels: usize, height: usize, width: usize) -> Self {
        let blocks = [64, 128, 256, 512, 512, 512, 512, 512]
            .into_iter()
            .map(|c| ConvBlock {
                out_channels: c,
                kernel: 4,
                stride: 2,
            })
            .collect();
        Self {
            conv_blocks: blocks,
            tap_layers: vec![5, 6, 7],
            embed_dim: 1000,
            ..Self::toy(in_channels, height, width)
        }
    }

    pub fn geom(&self, block: usize) -> ConvGeom {
        ConvGeom {
            stride: self.conv_blocks[block].stride,
            pad: self.padding,
        }
    }

    /// Blocks whose features feed the embedding head.
    pub fn effective_taps(&self) -> Vec<usize> {
        if self.multiscale {
            self.tap_layers.clone()
        } else {
            vec![self.conv_blocks.len().saturating_sub(1)]
        }
    }

    pub fn has_dropout(&self, block: usize) -> bool {
        block + self.dropout_blocks >= self.conv_blocks.len()
    }

    /// `(channels, height, width)` after each block.
    pub fn block_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shapes = Vec::with_capacity(self.conv_blocks.len());
        let (mut h, mut w) = (self.input_height, self.input_width);
        for (i, b) in self.conv_blocks.iter().enumerate() {
            let g = self.geom(i);
            match (g.out_len(h, b.kernel), g.out_len(w, b.kernel)) {
                (Some(nh), Some(nw)) => {
                    h = nh;
                    w = nw;
                }
                _ => {
                    return Err(Error::Dimension(format!(
                        "input {}×{} too small: block {i} sees {h}×{w} but has kernel {}",
                        self.input_height, self.input_width, b.kernel
                    )))
                }
            }
            shapes.push((b.out_channels, h, w));
        }
        Ok(shapes)
    }

    /// Input width of the embedding FC.
    pub fn fc_input_dim(&self) -> Result<usize> {
        let shapes = self.block_shapes()?;
        Ok(self
            .effective_taps()
            .iter()
            .map(|&t| {
                let (c, h, w) = shapes[t];
                if self.use_gap {
                    c
                } else {
                    c * h * w
                }
            })
            .sum())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.conv_blocks.len();
        if n == 0 || self.in_channels == 0 {
            return Err(Error::Config("encoder needs input channels and at least one block".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be ≥ 1".into()));
        }
        if self.conv_blocks.iter().any(|b| b.kernel == 0 || b.stride == 0 || b.out_channels == 0) {
            return Err(Error::Config("conv blocks need positive channels, kernel and stride".into()));
        }
        if self.multiscale && (self.tap_layers.is_empty() || self.tap_layers.iter().any(|&t| t >= n)) {
            return Err(Error::Config(format!(
                "tap layers {:?} must be non-empty valid block indices (< {n})",
                self.tap_layers
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Parameter(format!(
                "dropout probability must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        self.block_shapes()?;
        Ok(())
    }

    /// Same layer structure, ignoring input channel count and init seed.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.input_height == other.input_height
            && self.input_width == other.input_width
            && self.conv_blocks == other.conv_blocks
            && self.padding == other.padding
            && self.effective_taps() == other.effective_taps()
            && self.embed_dim == other.embed_dim
            && self.use_gap == other.use_gap
    }
}
