//! Autoregressive layout model, training and inference.

pub mod checkpoint;
pub mod config;
pub mod corrupt;
pub mod encoding;
pub mod infer;
mod net;
pub mod retrieval;
pub mod train;

pub use config::{ModelConfig, TrainConfig, GEOMETRY_DIMS};
pub use encoding::NormBounds;
pub use infer::{sample_class, SampleOptions, Sampled};
pub use net::{Model, SceneLoss, SequenceInput};
pub use train::{fit, init_model, train, EpochRecord, EvalStats, PreparedScene, TrainReport};
