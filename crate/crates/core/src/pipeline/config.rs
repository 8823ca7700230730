use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffcore::InitSpec;
use crate::encoder::{ConvBlock, EncoderConfig};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::synthproxy::{CannyParams, ProxyConfig};

pub const SEED_ENV: &str = "XVIEW_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Ground query against aerial reference.
    #[default]
    BaselineGa,
    /// Synthesized-aerial query against aerial reference.
    BaselineSynth,
    Joint,
    Fusion,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::BaselineGa, Stage::BaselineSynth, Stage::Joint, Stage::Fusion];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BaselineGa => "baseline-ga",
            Stage::BaselineSynth => "baseline-synth",
            Stage::Joint => "joint",
            Stage::Fusion => "fusion",
        }
    }

    pub fn default_batch(self) -> usize {
        match self {
            Stage::Joint => 24,
            _ => 30,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`; expected one of baseline-ga, baseline-synth, joint, fusion")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Toy,
    Full,
}

/// Encoder shape as written in a config file; unset fields fall back to
/// the preset. Input dims come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub preset: Preset,
    pub channels: Option<Vec<usize>>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
    pub padding: Option<usize>,
    pub taps: Option<Vec<usize>>,
    pub embed_dim: Option<usize>,
    pub dropout: f64,
    pub dropout_blocks: Option<usize>,
    pub multiscale: bool,
    pub gap: bool,
    pub normalize: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            preset: Preset::Toy,
            channels: None,
            kernel: None,
            stride: None,
            padding: None,
            taps: None,
            embed_dim: None,
            dropout: 0.5,
            dropout_blocks: None,
            multiscale: true,
            gap: false,
            normalize: false,
        }
    }
}

impl EncoderSettings {
    pub fn resolve(&self, in_channels: usize, height: usize, width: usize, seed: u64) -> Result<EncoderConfig> {
        let mut cfg = match self.preset {
            Preset::Toy => EncoderConfig::toy(in_channels, height, width),
            Preset::Full => EncoderConfig::full(in_channels, height, width),
        };
        let base = cfg.conv_blocks[0];
        let kernel = self.kernel.unwrap_or(base.kernel);
        let stride = self.stride.unwrap_or(base.stride);
        let channels: Vec<usize> = match &self.channels {
            Some(c) => c.clone(),
            None => cfg.conv_blocks.iter().map(|b| b.out_channels).collect(),
        };
        if channels.is_empty() {
            return Err(Error::Config("encoder needs at least one conv block".into()));
        }
        let n = channels.len();
        cfg.conv_blocks = channels.into_iter().map(|c| ConvBlock { out_channels: c, kernel, stride }).collect();
        if self.channels.is_some() && self.taps.is_none() {
            cfg.tap_layers = (n.saturating_sub(3)..n).collect();
        }
        if let Some(t) = &self.taps {
            cfg.tap_layers = t.clone();
        }
        if let Some(p) = self.padding {
            cfg.padding = p;
        }
        if let Some(e) = self.embed_dim {
            cfg.embed_dim = e;
        }
        cfg.dropout_p = self.dropout;
        cfg.dropout_blocks = self.dropout_blocks.unwrap_or(3).min(n);
        cfg.multiscale = self.multiscale;
        cfg.use_gap = self.gap;
        cfg.normalize = self.normalize;
        cfg.init = InitSpec::xavier(seed);
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Everything one training stage needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    pub seed: u64,
    pub lr: f64,
    /// Unset means 30, or 24 for the joint stage.
    pub batch_size: Option<usize>,
    pub steps_exhaustive: usize,
    pub steps_hard_negative: usize,
    /// Recall@1 on a training subset is logged every this many steps; 0 disables.
    pub eval_every: usize,
    pub eval_subset: usize,
    pub share_weights: bool,
    pub with_edgemap: bool,
    pub loss: LossConfig,
    pub encoder: EncoderSettings,
    pub canny: CannyParams,
    pub proxy: ProxyConfig,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            stage: Stage::BaselineGa,
            seed: 0,
            lr: 1e-5,
            batch_size: None,
            steps_exhaustive: 2000,
            steps_hard_negative: 1000,
            eval_every: 500,
            eval_subset: 100,
            share_weights: false,
            with_edgemap: false,
            loss: LossConfig::default(),
            encoder: EncoderSettings::default(),
            canny: CannyParams::default(),
            proxy: ProxyConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn config_err(e: impl fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl StageConfig {
    pub fn for_stage(stage: Stage) -> Self {
        Self { stage, ..Self::default() }
    }

    pub fn batch(&self) -> usize {
        self.batch_size.unwrap_or_else(|| self.stage.default_batch())
    }

    /// Parses a config file: top-level keys and tables apply to every
    /// stage, a table named after `stage` overrides them.
    pub fn parse(text: &str, stage: Stage) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        let mut overlay = None;
        for st in Stage::ALL {
            if let Some(v) = table.remove(st.name()) {
                let t = match v {
                    toml::Value::Table(t) => t,
                    _ => return Err(Error::Config(format!("`{st}` must be a section"))),
                };
                if st == stage {
                    overlay = Some(t);
                }
            }
        }
        if let Some(o) = overlay {
            merge(&mut table, o);
        }
        table.insert("stage".into(), toml::Value::String(stage.name().into()));
        let cfg: StageConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>, stage: Stage) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, stage).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `XVIEW_SEED` when it is set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
            self.validate()?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch() < 2 {
            return Err(Error::Config(format!("batch_size must be ≥ 2, got {}", self.batch())));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (what, s) in [("seed", self.seed), ("proxy.seed", self.proxy.seed)] {
            if s > i64::MAX as u64 {
                return Err(Error::Config(format!("{what} {s} exceeds {}", i64::MAX)));
            }
        }
        self.loss.validate().map_err(config_err)?;
        self.canny.validate().map_err(config_err)?;
        self.proxy.validate().map_err(config_err)?;
        Ok(())
    }
}

/// The resolved configuration embedded in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub config: StageConfig,
    pub ground: EncoderConfig,
    pub aerial: EncoderConfig,
}

impl ResolvedConfig {
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))
    }
}
