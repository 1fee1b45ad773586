//! `gen-data`: draw the synthetic long-tailed dataset described by a config.

use std::path::{Path, PathBuf};

use noisytwins::data::write_dataset_csv;
use noisytwins::gan::DataConfig;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::io::{create_dir, dataset, load_config, write_text};

pub const DATASET_FILE: &str = "dataset.csv";
pub const SPEC_FILE: &str = "dataset_spec.toml";

#[derive(Serialize)]
struct SpecEcho<'a> {
    rows: usize,
    class_counts: Vec<u64>,
    data: &'a DataConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenDataOutput {
    pub csv: PathBuf,
    pub spec: PathBuf,
    pub rows: usize,
}

/// Writes `dataset.csv` and an echo of the data section with the derived
/// class counts into `out`, or the config's `out_dir`, or `data`.
pub fn run_gen_data(config: &Path, out: Option<&Path>) -> Result<GenDataOutput> {
    let cfg = load_config(config)?;
    let dir =
        out.map(Path::to_path_buf).or_else(|| cfg.out_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| "data".into());
    let ds = dataset(&cfg, None)?;
    create_dir(&dir)?;
    let csv = dir.join(DATASET_FILE);
    write_dataset_csv(&csv, &ds)?;
    let echo = SpecEcho { rows: ds.len(), class_counts: ds.class_counts(), data: &cfg.data };
    let spec = dir.join(SPEC_FILE);
    write_text(&spec, &toml::to_string(&echo).map_err(|e| CliError::config(config, e))?)?;
    Ok(GenDataOutput { csv, spec, rows: ds.len() })
}
