//! Manifests, file containers, the synthetic benchmark and the staged
//! training driver.

mod config;
mod container;
mod dataset;
mod manifest;
mod stage;

pub use config::{EncoderSettings, Preset, ResolvedConfig, Stage, StageConfig, SEED_ENV};
pub use container::{
    config_digest, decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION, EMBEDDING_MAGIC,
};
pub use dataset::{generate_synthetic_dataset, SyntheticDataset, SyntheticSample, SyntheticSpec};
pub use manifest::{load_ground_truth_map, load_manifest, Manifest, ManifestRow, Split, MANIFEST_HEADER};
pub use stage::{materialize_proxy, run_stage, run_stage_on_views, EmbedView, StageModel, StageOutput};
