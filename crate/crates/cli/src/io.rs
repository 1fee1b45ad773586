//! File helpers shared by the subcommands.

use std::path::Path;

use noisytwins::data::{read_dataset_csv, synth_dataset, Dataset};
use noisytwins::gan::TrainConfig;
use noisytwins::numcore::Rng;

use crate::error::{CliError, Result};

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, format!("cannot read: {e}")))?;
    TrainConfig::from_toml_str(&text).map_err(|e| CliError::config(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The dataset described by `cfg.data`, read from `csv` when given.
pub fn dataset(cfg: &TrainConfig, csv: Option<&Path>) -> Result<Dataset> {
    let spec = cfg.data.spec()?;
    Ok(match csv {
        Some(path) => read_dataset_csv(path, cfg.data.profile(), spec)?,
        None => synth_dataset(&cfg.data.profile(), &spec, &mut Rng::new(cfg.data.seed))?,
    })
}

/// Thread cap from `NOISYTWINS_THREADS`, else the available parallelism.
pub fn thread_limit() -> Result<usize> {
    match std::env::var("NOISYTWINS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("NOISYTWINS_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
