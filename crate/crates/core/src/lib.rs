//! Simulator for physical-layer secret key generation with channel
//! obfuscation: synthetic OFDM channels, the probing protocol, K-L transform,
//! quantization, BCH reconciliation, privacy amplification, randomness tests
//! and eavesdropper attack evaluations.

pub mod attacks;
pub mod channel_model;
pub mod error;
pub mod harness;
pub mod kl_transform;
pub mod obfuscation;
pub mod quantizer;
pub mod reconciliation;
pub mod registry;
pub mod rng;
pub mod statistics;

pub use error::{Error, Result, Stage};
pub use harness::ExperimentConfig;
