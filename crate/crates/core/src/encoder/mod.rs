//! View encoders: conv stacks with multi-scale aggregation, two-stream and
//! joint models, and warm starts between them.

mod config;
mod model;
mod streams;

pub use config::{ConvBlock, EncoderConfig};
pub use model::Encoder;
pub use streams::{
    build_two_stream, load_encoder_weights, warm_start_joint, JointModel, TwoStreamModel, AERIAL_PREFIX,
    GROUND_PREFIX, SHARED_PREFIX,
};
