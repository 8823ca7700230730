use super::{Encoder, EncoderConfig};
use crate::diffcore::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const GROUND_PREFIX: &str = "ground";
pub const AERIAL_PREFIX: &str = "aerial";
pub const SHARED_PREFIX: &str = "shared";

/// Query and reference encoders trained on one pair type.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStreamModel<T> {
    pub store: ParamStore<T>,
    pub ground: Encoder,
    pub aerial: Encoder,
    pub share_cross_view_weights: bool,
}

/// Ground encoder plus one aerial encoder applied to both real and
/// synthesized aerial inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct JointModel<T> {
    pub store: ParamStore<T>,
    pub ground: Encoder,
    pub aerial: Encoder,
}

/// Builds a two-stream model. With `share`, both views read one set of
/// weights, which requires identical configs.
pub fn build_two_stream<T: Real>(cfg_g: EncoderConfig, cfg_a: EncoderConfig, share: bool) -> Result<TwoStreamModel<T>> {
    let mut store = ParamStore::new();
    let (ground, aerial) = if share {
        if cfg_g != cfg_a {
            return Err(Error::Config(
                "weight sharing needs structurally identical ground and aerial encoders".into(),
            ));
        }
        let enc = Encoder::build(cfg_g, SHARED_PREFIX, &mut store)?;
        (enc.clone(), enc)
    } else {
        (
            Encoder::build(cfg_g, GROUND_PREFIX, &mut store)?,
            Encoder::build(cfg_a, AERIAL_PREFIX, &mut store)?,
        )
    };
    Ok(TwoStreamModel {
        store,
        ground,
        aerial,
        share_cross_view_weights: share,
    })
}

/// Copies every parameter `dst` needs from `src` (stored under
/// `src_prefix`) into `store`. Fails on the first missing or mis-shaped
/// parameter.
pub fn load_encoder_weights<T: Real>(
    store: &mut ParamStore<T>,
    dst: &Encoder,
    src: &ParamStore<T>,
    src_prefix: &str,
) -> Result<()> {
    for (name, shape) in dst.param_shapes()? {
        let suffix = &name[dst.prefix().len()..];
        let src_name = format!("{src_prefix}{suffix}");
        let value = src.value(&src_name).map_err(|_| {
            Error::Checkpoint(format!("checkpoint lacks parameter `{src_name}` needed for `{name}`"))
        })?;
        if value.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter `{src_name}` has shape {:?}, `{name}` needs {shape:?}",
                value.shape()
            )));
        }
        store.insert(name, value.clone());
    }
    Ok(())
}

impl<T: Real> JointModel<T> {
    /// Builds the joint model's encoders from configs and fills them from a
    /// trained two-stream store. Optimizer state starts fresh.
    pub fn from_two_stream_store(
        cfg_g: EncoderConfig,
        cfg_a: EncoderConfig,
        src: &ParamStore<T>,
        src_ground_prefix: &str,
        src_aerial_prefix: &str,
    ) -> Result<Self> {
        let ground = Encoder::describe(cfg_g, GROUND_PREFIX)?;
        let aerial = Encoder::describe(cfg_a, AERIAL_PREFIX)?;
        let mut store = ParamStore::new();
        load_encoder_weights(&mut store, &ground, src, src_ground_prefix)?;
        load_encoder_weights(&mut store, &aerial, src, src_aerial_prefix)?;
        Ok(Self { store, ground, aerial })
    }
}

/// Joint model initialized from a trained two-stream model.
pub fn warm_start_joint<T: Real>(src: &TwoStreamModel<T>) -> Result<JointModel<T>> {
    JointModel::from_two_stream_store(
        src.ground.config().clone(),
        src.aerial.config().clone(),
        &src.store,
        src.ground.prefix(),
        src.aerial.prefix(),
    )
}
