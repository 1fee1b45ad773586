//! `train`: one training run with its log, checkpoints and manifest.

use std::path::{Path, PathBuf};

use noisytwins::data::Dataset;
use noisytwins::error::Error;
use noisytwins::gan::{save_checkpoint, train, TrainConfig, TrainObserver, TrainState};

use crate::error::{CliError, Result};
use crate::io::{create_dir, dataset, load_config, write_text};
use crate::manifest::{timestamp, Artifacts, RunManifest, RunStatus};

pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_LOG_FILE: &str = "run_log.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Debug, Default)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
}

/// Default run directory: `runs/<tag>-seed<seed>`.
pub fn default_run_dir(cfg: &TrainConfig) -> PathBuf {
    Path::new("runs").join(format!("{}-seed{}", cfg.kind().tag(), cfg.seed))
}

/// Saves checkpoints at the configured cadence and flushes partial results
/// when a step fails.
struct ArtifactWriter<'a> {
    dir: &'a Path,
    checkpoints: Vec<String>,
    aborted_at: Option<u64>,
}

impl ArtifactWriter<'_> {
    fn checkpoint(&mut self, state: &TrainState, name: &str) -> noisytwins::error::Result<()> {
        let rel = format!("{CHECKPOINT_DIR}/{name}");
        save_checkpoint(&self.dir.join(&rel), state)?;
        if !self.checkpoints.contains(&rel) {
            self.checkpoints.push(rel);
        }
        Ok(())
    }

    fn logs(&self, state: &TrainState) -> noisytwins::error::Result<()> {
        state.log.write_csv(&self.dir.join(RUN_LOG_FILE))?;
        if state.config.eval_every > 0 {
            state.log.write_snapshots_csv(&self.dir.join(SNAPSHOTS_FILE))?;
        }
        Ok(())
    }
}

impl TrainObserver for ArtifactWriter<'_> {
    fn on_checkpoint(&mut self, state: &TrainState) -> noisytwins::error::Result<()> {
        self.checkpoint(state, &format!("iter_{:08}.ntck", state.iteration))
    }

    fn on_finish(&mut self, state: &TrainState) -> noisytwins::error::Result<()> {
        self.logs(state)?;
        self.checkpoint(state, "final.ntck")
    }

    fn on_abort(&mut self, state: &TrainState, _error: &Error) -> noisytwins::error::Result<()> {
        self.logs(state)?;
        self.aborted_at = Some(state.iteration);
        self.checkpoint(state, &format!("abort_{:08}.ntck", state.iteration))
    }
}

/// Trains on `ds` into `dir`, writing the manifest whether or not training
/// completes. Divergence is returned as an error after the manifest is written.
pub fn train_into(cfg: &TrainConfig, ds: &Dataset, dir: &Path) -> Result<(TrainState, RunManifest)> {
    create_dir(&dir.join(CHECKPOINT_DIR))?;
    let config_text = cfg.to_toml_string()?;
    write_text(&dir.join(CONFIG_FILE), &config_text)?;
    let started = timestamp();
    let mut writer = ArtifactWriter { dir, checkpoints: Vec::new(), aborted_at: None };
    let result = train(cfg, ds, &mut writer);
    let ArtifactWriter { checkpoints, aborted_at, .. } = writer;
    let wrote_log = result.is_ok() || aborted_at.is_some();
    let mut manifest = RunManifest {
        tag: cfg.kind().tag().to_string(),
        status: RunStatus::Completed,
        error: None,
        seed: cfg.seed,
        started,
        finished: timestamp(),
        iterations_completed: 0,
        library_version: noisytwins::VERSION.to_string(),
        config: cfg.clone(),
        artifacts: Artifacts {
            config: CONFIG_FILE.into(),
            run_log: wrote_log.then(|| RUN_LOG_FILE.into()),
            snapshots: (wrote_log && cfg.eval_every > 0).then(|| SNAPSHOTS_FILE.into()),
            checkpoints,
            metrics: Vec::new(),
        },
    };
    match result {
        Ok(state) => {
            manifest.iterations_completed = state.iteration;
            manifest.write(dir)?;
            Ok((state, manifest))
        }
        Err(e) => {
            manifest.status = if e.is_divergence() { RunStatus::Diverged } else { RunStatus::Failed };
            manifest.error = Some(e.to_string());
            manifest.iterations_completed = aborted_at.unwrap_or(0);
            manifest.write(dir)?;
            Err(CliError::Core(e))
        }
    }
}

pub fn run_train(args: &TrainArgs) -> Result<RunManifest> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let dir =
        args.out.clone().or_else(|| cfg.out_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| default_run_dir(&cfg));
    let ds = dataset(&cfg, args.data.as_deref())?;
    let (_, manifest) = train_into(&cfg, &ds, &dir)?;
    Ok(manifest)
}
