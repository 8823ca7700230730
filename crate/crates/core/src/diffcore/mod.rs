//! Minimal deterministic reverse-mode numeric core.

mod gradcheck;
mod graph;
mod init;
mod params;
pub(crate) mod rng;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use graph::{
    row_distance, sigmoid, softplus, ConvGeom, DistanceMode, Graph, Mode, Var, DISTANCE_SMOOTHING,
};
pub use init::{InitKind, InitSpec};
pub use params::{AdamConfig, Param, ParamStore};
pub use rng::{mix, name_key, stream_rng};
pub use tensor::Tensor;
