//! `sweep`: train and evaluate one configuration per (value, seed) pair of a
//! single swept hyperparameter, then aggregate scores and plot them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use noisytwins::eval::{evaluate, mean_std, EvalOptions, EvalSources};
use noisytwins::gan::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::io::{create_dir, dataset, load_config, thread_limit, write_text};
use crate::svg::{band_plot, BandSeries};
use crate::train::train_into;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "sweep_summary.csv";
pub const FAILURES_FILE: &str = "sweep_failures.csv";
pub const CHILD_EVAL_FILE: &str = "eval.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    #[serde(alias = "σ")]
    Sigma,
    #[serde(alias = "λ")]
    Lambda,
    #[serde(alias = "γ")]
    Gamma,
    #[serde(alias = "ρ")]
    Rho,
    #[serde(alias = "α")]
    Alpha,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
            SweepParam::Rho => "rho",
            SweepParam::Alpha => "alpha",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Sigma => cfg.noise.sigma = value,
            SweepParam::Lambda => cfg.twins.lambda = value,
            SweepParam::Gamma => cfg.twins.gamma = value,
            SweepParam::Rho => cfg.data.rho = value,
            SweepParam::Alpha => cfg.noise.alpha = value,
        }
    }
}

/// Sweep specification. `config` and `out_dir` are relative to the spec file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub eval_seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(CliError::Usage(format!("sweep over {}: {m}", self.param.name())));
        if self.values.is_empty() {
            return usage("value list is empty");
        }
        if self.seeds.is_empty() {
            return usage("seed list is empty");
        }
        for (i, v) in self.values.iter().enumerate() {
            if self.values[..i].iter().any(|u| u.to_bits() == v.to_bits()) {
                return usage(&format!("duplicate value {v}"));
            }
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return usage(&format!("duplicate seed {s}"));
            }
        }
        Ok(())
    }
}

/// Short text form of a swept value, used in directory names and tables.
pub fn value_label(v: f64) -> String {
    let s = v.to_string();
    if s.len() > 12 {
        format!("{v:e}")
    } else {
        s
    }
}

/// One child run of a sweep.
#[derive(Clone, Debug)]
pub struct Job {
    pub value: f64,
    pub seed: u64,
    pub config: TrainConfig,
    pub dir: PathBuf,
}

/// Scores by metric name, or the failure message.
pub type JobResult = std::result::Result<Vec<(&'static str, f64)>, String>;

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub dir: PathBuf,
    pub jobs: Vec<Job>,
    pub results: Vec<JobResult>,
    pub plots: Vec<PathBuf>,
}

impl SweepOutput {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| r.is_err()).count()
    }
}

pub fn read_spec(path: &Path) -> Result<SweepSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, format!("cannot read: {e}")))?;
    let spec: SweepSpec = toml::from_str(&text).map_err(|e| CliError::config(path, e.message()))?;
    spec.validate()?;
    Ok(spec)
}

/// Child jobs in value-major order, each config validated.
pub fn plan(spec: &SweepSpec, base: &TrainConfig, dir: &Path) -> Result<Vec<Job>> {
    let mut jobs = Vec::with_capacity(spec.values.len() * spec.seeds.len());
    for &value in &spec.values {
        for &seed in &spec.seeds {
            let mut config = base.clone();
            spec.param.apply(&mut config, value);
            config.seed = seed;
            config.out_dir = None;
            config.validate().map_err(|e| CliError::Usage(format!("{} = {value}: {e}", spec.param.name())))?;
            let dir = dir.join(format!("{}={}", spec.param.name(), value_label(value))).join(format!("seed{seed}"));
            jobs.push(Job { value, seed, config, dir });
        }
    }
    Ok(jobs)
}

fn run_job(job: &Job, eval_seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let ds = dataset(&job.config, None)?;
    let (state, mut manifest) = train_into(&job.config, &ds, &job.dir)?;
    let opts = EvalOptions::from_config(&job.config, eval_seed);
    let report = evaluate(&state.generator, &state.table, &ds, &opts, &EvalSources::default())?;
    report.class_report().write_csv(&job.dir.join(CHILD_EVAL_FILE))?;
    manifest.artifacts.metrics.push(CHILD_EVAL_FILE.into());
    manifest.write(&job.dir)?;
    Ok(report.scalars())
}

/// Runs `jobs` on up to `threads` workers; results keep job order.
pub fn execute(jobs: &[Job], eval_seed: u64, threads: usize) -> Vec<JobResult> {
    let slots: Vec<Mutex<Option<JobResult>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = run_job(job, eval_seed).map_err(|e| e.to_string());
                match &result {
                    Ok(_) => eprintln!("finished {}", job.dir.display()),
                    Err(e) => eprintln!("failed {}: {e}", job.dir.display()),
                }
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().expect("result slot").expect("every job ran")).collect()
}

fn metric_names(results: &[JobResult]) -> Vec<&'static str> {
    results.iter().find_map(|r| r.as_ref().ok()).map_or_else(Vec::new, |s| s.iter().map(|(n, _)| *n).collect())
}

/// Long-format table `param,value,seed,metric,score` of successful jobs.
pub fn long_csv(param: SweepParam, jobs: &[Job], results: &[JobResult]) -> String {
    let mut s = String::from("param,value,seed,metric,score\n");
    for (job, result) in jobs.iter().zip(results) {
        if let Ok(scores) = result {
            for (metric, score) in scores {
                let _ = writeln!(s, "{},{},{},{metric},{score}", param.name(), value_label(job.value), job.seed);
            }
        }
    }
    s
}

/// Mean and std per value for `metric`, in the order values first appear.
pub fn series(metric: &str, jobs: &[Job], results: &[JobResult]) -> (BandSeries, Vec<usize>) {
    let mut values: Vec<f64> = Vec::new();
    for job in jobs {
        if !values.iter().any(|v| v.to_bits() == job.value.to_bits()) {
            values.push(job.value);
        }
    }
    values.sort_by(f64::total_cmp);
    let mut out = BandSeries::default();
    let mut counts = Vec::new();
    for v in values {
        let scores: Vec<f64> = jobs
            .iter()
            .zip(results)
            .filter(|(j, _)| j.value.to_bits() == v.to_bits())
            .filter_map(|(_, r)| r.as_ref().ok())
            .filter_map(|s| s.iter().find(|(n, _)| *n == metric).map(|(_, x)| *x))
            .filter(|x| x.is_finite())
            .collect();
        if scores.is_empty() {
            continue;
        }
        let (m, sd) = mean_std(&scores);
        out.x.push(v);
        out.mean.push(m);
        out.std.push(sd);
        counts.push(scores.len());
    }
    (out, counts)
}

pub fn run_sweep(spec_path: &Path, out: Option<&Path>) -> Result<SweepOutput> {
    let spec = read_spec(spec_path)?;
    let root = spec_path.parent().unwrap_or(Path::new("."));
    let base = match &spec.config {
        Some(p) => load_config(&root.join(p))?,
        None => TrainConfig::default(),
    };
    let dir = match (out, &spec.out_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => root.join(d),
        (None, None) => root.join(format!("sweep-{}", spec.param.name())),
    };
    let jobs = plan(&spec, &base, &dir)?;
    let threads = thread_limit()?;
    create_dir(&dir)?;
    let results = execute(&jobs, spec.eval_seed, threads);

    write_text(&dir.join(SWEEP_FILE), &long_csv(spec.param, &jobs, &results))?;
    let mut summary = String::from("param,value,metric,mean,std,n\n");
    let mut plots = Vec::new();
    for metric in metric_names(&results) {
        let (s, counts) = series(metric, &jobs, &results);
        for (((x, m), sd), n) in s.x.iter().zip(&s.mean).zip(&s.std).zip(&counts) {
            let _ = writeln!(summary, "{},{},{metric},{m},{sd},{n}", spec.param.name(), value_label(*x));
        }
        let title = format!("{metric} vs {} (mean ± std over seeds)", spec.param.name());
        let path = dir.join(format!("plot_{metric}.svg"));
        write_text(&path, &band_plot(&title, spec.param.name(), metric, &s))?;
        plots.push(path);
    }
    write_text(&dir.join(SUMMARY_FILE), &summary)?;

    let output = SweepOutput { dir, jobs, results, plots };
    let failed = output.failed();
    if failed > 0 {
        let mut f = String::from("param,value,seed,error\n");
        for (job, r) in output.jobs.iter().zip(&output.results) {
            if let Err(e) = r {
                let _ = writeln!(
                    f,
                    "{},{},{},\"{}\"",
                    spec.param.name(),
                    value_label(job.value),
                    job.seed,
                    e.replace('"', "\"\"")
                );
            }
        }
        write_text(&output.dir.join(FAILURES_FILE), &f)?;
        return Err(CliError::PartialSweep { failed, total: output.jobs.len() });
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> Result<SweepSpec> {
        let s: SweepSpec = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    #[test]
    fn parses_names_and_symbols() {
        let s = spec("param = \"sigma\"\nvalues = [0.0, 0.25]\nseeds = [1]\n").unwrap();
        assert_eq!(s.param, SweepParam::Sigma);
        assert_eq!(spec("param = \"γ\"\nvalues = [0.0]\nseeds = [1]\n").unwrap().param, SweepParam::Gamma);
        assert!(spec("param = \"beta\"\nvalues = [0.0]\nseeds = [1]\n").is_err());
        assert!(spec("param = \"rho\"\nvalues = [1.0]\nseeds = [1]\nextra = 1\n").is_err());
    }

    #[test]
    fn empty_or_duplicate_lists_are_usage_errors() {
        for text in [
            "param = \"sigma\"\nvalues = []\nseeds = [1]\n",
            "param = \"sigma\"\nvalues = [0.1]\nseeds = []\n",
            "param = \"sigma\"\nvalues = [0.1, 0.1]\nseeds = [1]\n",
            "param = \"sigma\"\nvalues = [0.1]\nseeds = [1, 1]\n",
        ] {
            assert_eq!(spec(text).unwrap_err().exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn plan_applies_each_parameter() {
        let base = TrainConfig::default();
        for (param, (a, b), read) in [
            (SweepParam::Sigma, (0.5, 2.0), (|c: &TrainConfig| c.noise.sigma) as fn(&TrainConfig) -> f64),
            (SweepParam::Lambda, (0.5, 2.0), |c| c.twins.lambda),
            (SweepParam::Gamma, (0.5, 2.0), |c| c.twins.gamma),
            (SweepParam::Rho, (2.0, 50.0), |c| c.data.rho),
            (SweepParam::Alpha, (0.5, 0.9), |c| c.noise.alpha),
        ] {
            let s =
                SweepSpec { param, values: vec![a, b], seeds: vec![3, 4], config: None, out_dir: None, eval_seed: 0 };
            let jobs = plan(&s, &base, Path::new("o")).unwrap();
            assert_eq!(jobs.len(), 4);
            assert_eq!(jobs.iter().map(|j| read(&j.config)).collect::<Vec<_>>(), [a, a, b, b]);
            assert_eq!(jobs.iter().map(|j| j.seed).collect::<Vec<_>>(), [3, 4, 3, 4]);
            assert_eq!(jobs[1].dir, Path::new("o").join(format!("{}={a}", param.name())).join("seed4"));
        }
    }

    #[test]
    fn value_labels_stay_short() {
        assert_eq!(value_label(0.0), "0");
        assert_eq!(value_label(0.25), "0.25");
        assert_eq!(value_label(100.0), "100");
        assert_eq!(value_label(1e300), "1e300");
        assert_eq!(value_label(1.5e-9), "0.0000000015");
        assert_eq!(value_label(1.5e-12), "1.5e-12");
    }

    #[test]
    fn invalid_values_fail_before_any_run() {
        let base = TrainConfig::default();
        for (param, value) in [(SweepParam::Alpha, 2.0), (SweepParam::Rho, 0.5), (SweepParam::Sigma, -1.0)] {
            let s = SweepSpec { param, values: vec![value], seeds: vec![0], config: None, out_dir: None, eval_seed: 0 };
            assert_eq!(plan(&s, &base, Path::new("o")).unwrap_err().exit_code(), 2, "{param:?}");
        }
    }

    #[test]
    fn aggregation_skips_failures() {
        let base = TrainConfig::default();
        let s = SweepSpec {
            param: SweepParam::Sigma,
            values: vec![0.75, 0.0],
            seeds: vec![0, 1],
            config: None,
            out_dir: None,
            eval_seed: 0,
        };
        let jobs = plan(&s, &base, Path::new("o")).unwrap();
        let results: Vec<JobResult> = vec![
            Ok(vec![("fid", 1.0), ("tail_coverage", 0.5)]),
            Ok(vec![("fid", 3.0), ("tail_coverage", 0.7)]),
            Ok(vec![("fid", 5.0), ("tail_coverage", f64::NAN)]),
            Err("diverged".into()),
        ];
        let csv = long_csv(s.param, &jobs, &results);
        assert_eq!(csv.lines().count(), 1 + 3 * 2);
        assert!(csv.contains("sigma,0.75,1,fid,3\n"));
        let (fid, counts) = series("fid", &jobs, &results);
        assert_eq!(fid.x, [0.0, 0.75]);
        assert_eq!(fid.mean, [5.0, 2.0]);
        assert_eq!(counts, [1, 2]);
        assert!((fid.std[1] - 2.0_f64.sqrt()).abs() < 1e-12);
        let (tail, _) = series("tail_coverage", &jobs, &results);
        assert_eq!(tail.x, [0.75]);
        assert_eq!(metric_names(&results), ["fid", "tail_coverage"]);
    }
}
