use rayon::prelude::*;

use super::EncoderConfig;
use crate::diffcore::{mix, name_key, Graph, InitKind, InitSpec, Mode, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One view's encoder: a config plus the parameter-name prefix under which
/// its weights live in a [`ParamStore`]. Two encoders with the same prefix
/// share weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    cfg: EncoderConfig,
    prefix: String,
}

impl Encoder {
    /// Validates `cfg` and registers freshly initialized parameters under
    /// `prefix`. Conv weights depend only on `(init, prefix, block)`, so
    /// ablations of the head never change them.
    pub fn build<T: Real>(cfg: EncoderConfig, prefix: &str, store: &mut ParamStore<T>) -> Result<Self> {
        let enc = Self::describe(cfg, prefix)?;
        let zeros = InitSpec::new(InitKind::Zeros, enc.cfg.init.seed);
        for (name, shape) in enc.param_shapes()? {
            let init = if name.ends_with(".b") { zeros } else { enc.cfg.init };
            store.insert(name.clone(), init.sample(&name, &shape));
        }
        Ok(enc)
    }

    /// Validates `cfg` without touching any store.
    pub fn describe(cfg: EncoderConfig, prefix: &str) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prefix: prefix.to_string(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    fn name(&self, local: &str) -> String {
        format!("{}.{local}", self.prefix)
    }

    /// Every parameter name this encoder reads, with its shape.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut out = Vec::new();
        let mut c_in = self.cfg.in_channels;
        for (i, b) in self.cfg.conv_blocks.iter().enumerate() {
            out.push((self.name(&format!("conv{i}.w")), vec![b.out_channels, c_in, b.kernel, b.kernel]));
            out.push((self.name(&format!("conv{i}.b")), vec![b.out_channels]));
            c_in = b.out_channels;
        }
        let fc_in = self.cfg.fc_input_dim()?;
        out.push((self.name("fc.w"), vec![fc_in, self.cfg.embed_dim]));
        out.push((self.name("fc.b"), vec![self.cfg.embed_dim]));
        Ok(out)
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.cfg;
        if shape.len() != 4 || shape[1] != c.in_channels || shape[2] != c.input_height || shape[3] != c.input_width
        {
            return Err(Error::Dimension(format!(
                "encoder `{}` expects N×{}×{}×{} input, got {shape:?}",
                self.prefix, c.in_channels, c.input_height, c.input_width
            )));
        }
        Ok(())
    }

    /// Records the forward pass of `images` on `g`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, images: Var, mode: Mode) -> Result<Var> {
        self.check_input(g.value(images).shape())?;
        let taps = self.cfg.effective_taps();
        let mut h = images;
        let mut tapped = Vec::with_capacity(taps.len());
        for i in 0..self.cfg.conv_blocks.len() {
            let w = g.param(store, &self.name(&format!("conv{i}.w")))?;
            let b = g.param(store, &self.name(&format!("conv{i}.b")))?;
            h = g.conv2d(h, w, b, self.cfg.geom(i))?;
            h = g.relu(h);
            if self.cfg.has_dropout(i) {
                let site = mix(self.cfg.init.seed, name_key(&self.name(&format!("drop{i}"))), 0);
                h = g.dropout(h, self.cfg.dropout_p, mode, site)?;
            }
            if taps.contains(&i) {
                tapped.push(if self.cfg.use_gap { g.gap(h)? } else { g.flatten(h)? });
            }
        }
        let feat = if tapped.len() == 1 { tapped[0] } else { g.concat(&tapped)? };
        let w = g.param(store, &self.name("fc.w"))?;
        let b = g.param(store, &self.name("fc.b"))?;
        let out = g.linear(feat, w, b)?;
        if self.cfg.normalize {
            g.l2_normalize(out)
        } else {
            Ok(out)
        }
    }

    /// Embeds `images` (N×C×H×W) and returns the N×embed_dim values.
    pub fn encode<T: Real>(&self, store: &ParamStore<T>, images: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.input(images.clone());
        let y = self.forward(&mut g, store, x, mode)?;
        Ok(g.value(y).clone())
    }

    /// Eval-mode encoding in chunks of `chunk` rows, fanned out over the
    /// rayon pool. Rows come back in input order, and every row's arithmetic
    /// is independent of its chunk, so the result does not depend on the
    /// chunking or worker count.
    pub fn encode_frozen<T: Real>(&self, store: &ParamStore<T>, images: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        self.check_input(images.shape())?;
        let n = images.shape()[0];
        let chunk = chunk.max(1);
        let parts: Vec<Tensor<T>> = (0..n.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let part = images.slice_rows(c * chunk, ((c + 1) * chunk).min(n))?;
                self.encode(store, &part, Mode::Eval)
            })
            .collect::<Result<_>>()?;
        Tensor::stack_rows(&parts)
    }
}
