//! `eval`: score a checkpoint against a dataset over one or more seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use noisytwins::data::read_dataset_csv;
use noisytwins::eval::{evaluate, summarize, EvalOptions, EvalReport, EvalSources};
use noisytwins::gan::load_checkpoint;
use noisytwins::metrics::read_features;

use crate::error::{CliError, Result};
use crate::io::{create_dir, write_text};

pub const SCALARS_FILE: &str = "eval_scalars.csv";
pub const SUMMARY_FILE: &str = "eval_summary.csv";

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    /// Reference features replacing the class-balanced resample of the data.
    pub features: Option<PathBuf>,
    /// Features replacing the generated points.
    pub gen_features: Option<PathBuf>,
    /// Score the dataset against itself.
    pub self_eval: bool,
    pub samples: Option<usize>,
    pub runs: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    pub fn new(checkpoint: impl Into<PathBuf>, data: impl Into<PathBuf>) -> Self {
        EvalArgs {
            checkpoint: checkpoint.into(),
            data: data.into(),
            features: None,
            gen_features: None,
            self_eval: false,
            samples: None,
            runs: 1,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub dir: PathBuf,
    pub run_files: Vec<PathBuf>,
    pub scalars: PathBuf,
    pub summary: PathBuf,
    pub reports: Vec<EvalReport>,
}

pub fn run_file_name(run: usize) -> String {
    format!("eval_run{run}.csv")
}

pub fn run_eval(args: &EvalArgs) -> Result<EvalOutput> {
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    if args.self_eval && (args.features.is_some() || args.gen_features.is_some()) {
        return Err(CliError::Usage("--self-eval cannot be combined with feature files".into()));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let cfg = &ckpt.config;
    let ds = read_dataset_csv(&args.data, cfg.data.profile(), cfg.data.spec()?)?;
    let sources = if args.self_eval {
        EvalSources::self_eval(&ds)?
    } else {
        EvalSources {
            real: args.features.as_deref().map(|p| read_features(p, None)).transpose()?,
            gen: args.gen_features.as_deref().map(|p| read_features(p, None)).transpose()?,
        }
    };
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.checkpoint.parent().unwrap_or(Path::new(".")).join("eval"),
    };
    create_dir(&dir)?;

    let mut reports = Vec::with_capacity(args.runs);
    let mut run_files = Vec::with_capacity(args.runs);
    let mut scalars = String::from("run,seed,samples,metric,value\n");
    for run in 0..args.runs {
        let seed = args.seed + run as u64;
        let mut opts = EvalOptions::from_config(cfg, seed);
        if let Some(n) = args.samples {
            opts.samples = n;
        }
        let report = evaluate(&ckpt.generator, &ckpt.table, &ds, &opts, &sources)?;
        let path = dir.join(run_file_name(run));
        report.class_report().write_csv(&path)?;
        for (name, value) in report.scalars() {
            let _ = writeln!(scalars, "{run},{seed},{},{name},{value}", opts.samples);
        }
        run_files.push(path);
        reports.push(report);
    }
    let scalars_path = dir.join(SCALARS_FILE);
    write_text(&scalars_path, &scalars)?;

    let samples = args.samples.unwrap_or(cfg.eval.samples);
    let mut summary = String::from("metric,mean,std,runs,samples\n");
    for (name, mean, std) in summarize(&reports) {
        let _ = writeln!(summary, "{name},{mean},{std},{},{samples}", reports.len());
    }
    let summary_path = dir.join(SUMMARY_FILE);
    write_text(&summary_path, &summary)?;
    Ok(EvalOutput { dir, run_files, scalars: scalars_path, summary: summary_path, reports })
}
