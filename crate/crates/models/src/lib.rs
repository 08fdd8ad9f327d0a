//! Scoring backends for few-pixel attacks.
//!
//! [`TinyClassifier`] is a small fully connected network that serves both
//! as the black box under attack and as the white-box surrogate used for
//! mask generation. [`RemoteModel`] scores over HTTP, and [`server`] hosts
//! any scorer behind the same protocol.

pub mod contrast;
pub mod dataset;
pub mod error;
pub mod remote;
pub mod server;
pub mod tiny;
pub mod train;
pub mod weights;
pub mod wire;

pub use dataset::{generate_shapes, LabeledImage};
pub use error::{ModelsError, Result};
pub use remote::RemoteModel;
pub use tiny::{Dense, TinyClassifier};
pub use train::{train, TrainConfig, TrainReport};
