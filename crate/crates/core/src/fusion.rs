//! Feature fusion: `f_g* = FC(concat(f_g, f_a'))` for queries and
//! `f_a* = FC(f_a)` for references, trained on a frozen joint model.

use crate::diffcore::{Graph, InitKind, InitSpec, ParamStore, Tensor, Var};
use crate::encoder::JointModel;
use crate::error::{dim_err, param_err, Error, Result};
use crate::losses::{batch_loss, LossConfig};
use crate::scalar::Real;
use crate::training::{run_schedule, select_triplets, Schedule, StepRecord};

pub const QUERY_W: &str = "fusion.query.w";
pub const QUERY_B: &str = "fusion.query.b";
pub const REF_W: &str = "fusion.ref.w";
pub const REF_B: &str = "fusion.ref.b";

/// Standard deviation of the zero-mean uniform FC initialization.
pub const FUSION_INIT_STD: f64 = 0.005;

#[derive(Clone, Debug, PartialEq)]
pub struct FusionModel<T> {
    pub store: ParamStore<T>,
    pub embed_dim: usize,
}

/// Fusion head with weights uniform on `±0.005·√3` and zero biases.
pub fn init_fusion<T: Real>(embed_dim: usize, seed: u64) -> Result<FusionModel<T>> {
    if embed_dim == 0 {
        return Err(param_err!("fusion embed dim must be ≥ 1"));
    }
    let init = InitSpec::new(InitKind::UniformWithStd { std: FUSION_INIT_STD }, seed);
    let mut store = ParamStore::new();
    store.insert(QUERY_W, init.sample(QUERY_W, &[2 * embed_dim, embed_dim]));
    store.insert(QUERY_B, Tensor::zeros(&[embed_dim]));
    store.insert(REF_W, init.sample(REF_W, &[embed_dim, embed_dim]));
    store.insert(REF_B, Tensor::zeros(&[embed_dim]));
    Ok(FusionModel { store, embed_dim })
}

impl<T: Real> FusionModel<T> {
    /// Rebuilds a head from stored weights, checking the block shapes.
    pub fn from_store(store: ParamStore<T>) -> Result<Self> {
        let w = store
            .value(REF_W)
            .map_err(|_| Error::Checkpoint(format!("missing `{REF_W}`")))?;
        let e = w.shape()[0];
        let expect = [(QUERY_W, vec![2 * e, e]), (QUERY_B, vec![e]), (REF_W, vec![e, e]), (REF_B, vec![e])];
        for (name, shape) in expect {
            match store.value(name) {
                Ok(t) if t.shape() == shape.as_slice() => {}
                _ => return Err(Error::Checkpoint(format!("fusion parameter `{name}` missing or not {shape:?}"))),
            }
        }
        Ok(Self { store, embed_dim: e })
    }

    fn check(&self, what: &str, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 || shape[1] != self.embed_dim {
            return Err(dim_err!("{what} must be N×{}, got {shape:?}", self.embed_dim));
        }
        Ok(())
    }

    /// Records `FC(concat(f_g, f_synth))`, ground features first.
    pub fn fuse_query(&self, g: &mut Graph<T>, store: &ParamStore<T>, f_g: Var, f_synth: Var) -> Result<Var> {
        self.check("ground features", g.value(f_g).shape())?;
        self.check("synthesized features", g.value(f_synth).shape())?;
        if g.value(f_g).shape() != g.value(f_synth).shape() {
            return Err(dim_err!(
                "ground {:?} and synthesized {:?} rows must align",
                g.value(f_g).shape(),
                g.value(f_synth).shape()
            ));
        }
        let cat = g.concat(&[f_g, f_synth])?;
        let w = g.param(store, QUERY_W)?;
        let b = g.param(store, QUERY_B)?;
        g.linear(cat, w, b)
    }

    pub fn project_reference(&self, g: &mut Graph<T>, store: &ParamStore<T>, f_a: Var) -> Result<Var> {
        self.check("aerial features", g.value(f_a).shape())?;
        let w = g.param(store, REF_W)?;
        let b = g.param(store, REF_B)?;
        g.linear(f_a, w, b)
    }

    pub fn fuse_query_values(&self, f_g: &Tensor<T>, f_synth: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let (a, b) = (g.input(f_g.clone()), g.input(f_synth.clone()));
        let y = self.fuse_query(&mut g, &self.store, a, b)?;
        Ok(g.value(y).clone())
    }

    pub fn project_reference_values(&self, f_a: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let a = g.input(f_a.clone());
        let y = self.project_reference(&mut g, &self.store, a)?;
        Ok(g.value(y).clone())
    }
}

/// Aligned image tensors for one split. Row `i` of every tensor belongs to
/// sample `ids[i]`.
#[derive(Clone, Debug)]
pub struct ViewSet<T> {
    pub ids: Vec<String>,
    pub ground: Tensor<T>,
    pub aerial: Tensor<T>,
    /// Synthesized aerial views, when materialized for every sample.
    pub synth: Option<Tensor<T>>,
}

impl<T: Real> ViewSet<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn require_synth(&self) -> Result<&Tensor<T>> {
        self.synth.as_ref().ok_or_else(|| {
            Error::Data(format!(
                "sample `{}` has no synthesized aerial input",
                self.ids.first().map_or("<none>", String::as_str)
            ))
        })
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            ground: self.ground.select_rows(idx)?,
            aerial: self.aerial.select_rows(idx)?,
            synth: self.synth.as_ref().map(|s| s.select_rows(idx)).transpose()?,
        })
    }
}

/// Frozen joint-model features the fusion head trains on.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionFeatures<T> {
    pub ground: Tensor<T>,
    pub synth: Tensor<T>,
    pub aerial: Tensor<T>,
}

/// Eval-mode features from the frozen joint model; the synthesized views go
/// through the aerial encoder.
pub fn extract_fusion_features<T: Real>(joint: &JointModel<T>, views: &ViewSet<T>) -> Result<FusionFeatures<T>> {
    let synth = views.require_synth()?;
    Ok(FusionFeatures {
        ground: joint.ground.encode_frozen(&joint.store, &views.ground, 32)?,
        synth: joint.aerial.encode_frozen(&joint.store, synth, 32)?,
        aerial: joint.aerial.encode_frozen(&joint.store, &views.aerial, 32)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionTrainConfig {
    pub schedule: Schedule,
    pub loss: LossConfig,
    pub init_seed: u64,
}

/// Trains a fresh fusion head on cached features.
pub fn train_fusion_on_features<T: Real>(
    features: &FusionFeatures<T>,
    cfg: &FusionTrainConfig,
) -> Result<(FusionModel<T>, Vec<StepRecord>)> {
    let embed_dim = features.ground.shape()[1];
    let mut model = init_fusion::<T>(embed_dim, cfg.init_seed)?;
    let mut store = std::mem::take(&mut model.store);
    let head = model.clone();
    let log = run_schedule(
        &mut store,
        features.ground.shape()[0],
        &cfg.schedule,
        |g, s, batch, phase, _| {
            let fg = g.input(features.ground.select_rows(batch)?);
            let fs = g.input(features.synth.select_rows(batch)?);
            let fa = g.input(features.aerial.select_rows(batch)?);
            let q = head.fuse_query(g, s, fg, fs)?;
            let r = head.project_reference(g, s, fa)?;
            let triplets = select_triplets(phase, g.value(q), g.value(r), cfg.loss.distance)?;
            batch_loss(g, q, r, &triplets, &cfg.loss)
        },
        |_, _| Ok(()),
    )?;
    model.store = store;
    Ok((model, log))
}

/// Extracts features once from the frozen joint model and trains the head.
pub fn train_fusion<T: Real>(
    joint: &JointModel<T>,
    views: &ViewSet<T>,
    cfg: &FusionTrainConfig,
) -> Result<(FusionModel<T>, Vec<StepRecord>)> {
    let features = extract_fusion_features(joint, views)?;
    train_fusion_on_features(&features, cfg)
}
