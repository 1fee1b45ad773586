//! Toy conditional GAN over 2-D points with noise-augmented class embeddings
//! and the twins regularizer on the generator step.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{DataConfig, EvalConfig, ModelConfig, NoiseConfig, OptimConfig, RunKind, TrainConfig};
pub use model::{
    d_loss, g_loss, generator_objective, r1_from_trace, r1_penalty, Discriminator, Generator, GeneratorGraph,
    GeneratorInputs, SAMPLE_DIM,
};
pub use train::{
    train, train_step, LogRecord, NoopObserver, RunLog, TrainObserver, TrainState, RUN_LOG_HEADER, SNAPSHOT_HEADER,
};

#[cfg(test)]
mod tests;
