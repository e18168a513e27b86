//! Persistence: manifests, embedding files, checkpoints and training logs.

mod bytes;
pub mod checkpoint;
pub mod manifest;
pub mod training_log;
pub mod vemb;

pub use checkpoint::{read_checkpoint, write_checkpoint, zero_head, ModelCheckpoint};
pub use manifest::{manifest_to_string, read_manifest, write_manifest};
pub use training_log::{format_log, parse_log};
pub use vemb::{read_vemb, write_vemb, EmbeddingFile, EmbeddingMode, EmbeddingRecord};
pub use vipera_core::dataset::{select_training_subset, split_manifest};
