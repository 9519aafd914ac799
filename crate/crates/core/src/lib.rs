//! Per-depth-slice GAN augmentation for volumetric classification: network
//! definitions, volume ingestion and preprocessing, GAN banks, the 3-D CNN
//! classifier and the augmentation-ratio experiment harness.

pub mod classifier;
pub mod error;
pub mod gan;
pub mod harness;
pub mod labels;
pub mod network;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use labels::{Label, Provenance};
