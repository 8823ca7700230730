//! Cross-view (ground ↔ aerial) image matching engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: tensors, a reverse-mode tape, Adam and a finite-difference
//!   gradient checker.
//! - [`losses`]: the triplet-loss family, exhaustive triplet enumeration and
//!   in-batch hard-negative mining.
//! - [`encoder`]: two-stream convolutional encoders with multi-scale feature
//!   aggregation, weight sharing and warm starts.
//! - [`fusion`]: the fused query head over ground and synthesized-aerial
//!   embeddings.
//! - [`synthproxy`]: Canny edge maps and the stand-in view synthesizer.
//! - [`retrieval`]: distance matrices, recall@K and geo-localization curves.
//! - [`pipeline`]: file formats, the synthetic benchmark and staged training.
//!
//! Numeric code is generic over [`Real`]; the aliases below fix the scalar
//! type for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod losses;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;
pub mod synthproxy;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor = diffcore::Tensor<f64>;
pub type Tensor32 = diffcore::Tensor<f32>;
pub type Graph = diffcore::Graph<f64>;
pub type ParamStore = diffcore::ParamStore<f64>;
