//! Noise-augmented class embeddings with a twin cross-correlation regularizer
//! for conditional GANs, a toy 2-D GAN to train them in, and the metrics used
//! to measure class-wise mode collapse.

mod binio;
pub mod data;
pub mod error;
pub mod eval;
pub mod gan;
pub mod latent;
pub mod metrics;
pub mod numcore;
pub mod twins_loss;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
