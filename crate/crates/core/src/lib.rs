//! Two-stage fully convolutional regression of lesion memberships from
//! multi-contrast brain MRI slices.
//!
//! Each input contrast passes through its own convolutional pathway; the
//! pathway outputs are concatenated and passed through a fusion pathway and a
//! single-channel head that predicts a smooth membership map of the same size
//! as the input. Because there are no fully connected layers, a network
//! trained on small patches segments whole slices of any size.

pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod inference;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod phantom;
pub mod targets;
pub mod training;
pub mod volio;
pub mod volume;

pub use error::{Error, Result};
pub use network::{Network, NetworkConfig, PathwayConfig, Plane};
pub use volume::Volume;
