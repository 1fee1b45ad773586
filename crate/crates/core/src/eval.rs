//! Generating samples from a trained model and scoring them against data.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gan::{Generator, TrainConfig, TrainState};
use crate::latent::{augmented_rows, sample_noise, EmbeddingTable};
use crate::metrics::{
    dispersion_summary, frechet_distance, intra_class_fid, latent_dispersion, mode_coverage, precision_recall,
    ClassReport, FeatureSet, FeatureStats, IntraClassFid,
};
use crate::numcore::{gaussian_sample, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub pr_k: usize,
    pub min_per_class: usize,
    pub coverage_radius: f64,
    pub noisy_conditioning: bool,
    pub tail_classes: usize,
    pub seed: u64,
}

impl EvalOptions {
    pub fn from_config(cfg: &TrainConfig, seed: u64) -> Self {
        EvalOptions {
            samples: cfg.eval.samples,
            pr_k: cfg.eval.pr_k,
            min_per_class: cfg.eval.min_per_class,
            coverage_radius: cfg.coverage_radius(),
            noisy_conditioning: cfg.eval.noisy_conditioning,
            tail_classes: cfg.eval.tail_classes,
            seed,
        }
    }
}

/// `total` labels split as evenly as possible over classes, class-major.
pub fn balanced_labels(num_classes: usize, total: usize) -> Vec<usize> {
    (0..num_classes)
        .flat_map(|c| std::iter::repeat_n(c, total / num_classes + usize::from(c < total % num_classes)))
        .collect()
}

/// Latents `w` and points `x` generated for `labels`.
pub fn generate_samples(
    gen: &Generator,
    table: &EmbeddingTable,
    labels: &[usize],
    noisy: bool,
    rng: &mut Rng,
) -> Result<(Matrix, Matrix)> {
    let z = gaussian_sample(rng, labels.len(), table.dim(), 0.0, 1.0)?;
    let noise = if noisy { sample_noise(table, labels, rng)? } else { Matrix::zeros(labels.len(), table.dim()) };
    gen.generate(&z, &augmented_rows(table, labels, &noise)?)
}

/// Per class, `per_class` rows drawn with replacement from the dataset.
pub fn balanced_resample(ds: &Dataset, total: usize, rng: &mut Rng) -> Result<FeatureSet> {
    let labels = balanced_labels(ds.num_classes(), total);
    let mut rows = Vec::with_capacity(labels.len());
    for &c in &labels {
        let class = ds.class_rows(c);
        if class.is_empty() {
            return Err(Error::contract("balanced_resample", format!("class {c} has no samples")));
        }
        rows.push(class[rng.below(class.len())]);
    }
    FeatureSet::new(ds.samples().select_rows(&rows), Some(labels), "real")
}

/// Classes with the smallest training counts, rarest first.
pub fn tail_classes(counts: &[u64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..counts.len()).collect();
    idx.sort_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
    idx.truncate(n);
    idx
}

/// Replacement sample sets for the distribution metrics.
#[derive(Clone, Debug, Default)]
pub struct EvalSources {
    /// Reference set in place of a class-balanced resample of the dataset.
    pub real: Option<FeatureSet>,
    /// Generated set in place of model samples.
    pub gen: Option<FeatureSet>,
}

impl EvalSources {
    /// Both roles filled by the full dataset.
    pub fn self_eval(ds: &Dataset) -> Result<Self> {
        let fs = FeatureSet::new(ds.samples().clone(), Some(ds.labels().to_vec()), "dataset")?;
        Ok(EvalSources { real: Some(fs.clone()), gen: Some(fs) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub fid: f64,
    pub precision: f64,
    pub recall: f64,
    pub ifid: IntraClassFid,
    pub coverage: Vec<f64>,
    pub dispersion: Vec<Option<f64>>,
    pub tail: Vec<usize>,
}

impl EvalReport {
    pub fn mean_coverage(&self) -> f64 {
        self.coverage.iter().sum::<f64>() / self.coverage.len() as f64
    }

    pub fn tail_coverage(&self) -> f64 {
        self.tail.iter().map(|&c| self.coverage[c]).sum::<f64>() / self.tail.len() as f64
    }

    pub fn min_dispersion(&self) -> Option<f64> {
        dispersion_summary(&self.dispersion).map(|s| s.0)
    }

    pub fn mean_dispersion(&self) -> Option<f64> {
        dispersion_summary(&self.dispersion).map(|s| s.1)
    }

    /// Scalar summary metrics by name.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let nan = f64::NAN;
        vec![
            ("fid", self.fid),
            ("precision", self.precision),
            ("recall", self.recall),
            ("ifid_mean", self.ifid.mean),
            ("mean_coverage", self.mean_coverage()),
            ("tail_coverage", self.tail_coverage()),
            ("min_dispersion", self.min_dispersion().unwrap_or(nan)),
            ("mean_dispersion", self.mean_dispersion().unwrap_or(nan)),
        ]
    }

    /// Per-class table of intra-class FID, mode coverage, and latent dispersion.
    pub fn class_report(&self) -> ClassReport {
        ClassReport {
            metrics: vec!["ifid".into(), "mode_coverage".into(), "latent_dispersion".into()],
            rows: (0..self.coverage.len())
                .map(|c| (c, vec![self.ifid.value(c), Some(self.coverage[c]), self.dispersion[c]]))
                .collect(),
        }
    }
}

/// Scores model samples (or the supplied replacement sets) against `ds`.
pub fn evaluate(
    gen: &Generator,
    table: &EmbeddingTable,
    ds: &Dataset,
    opts: &EvalOptions,
    sources: &EvalSources,
) -> Result<EvalReport> {
    if table.num_classes() != ds.num_classes() {
        return Err(Error::shape(
            "evaluate",
            format!("model has {} classes, dataset {}", table.num_classes(), ds.num_classes()),
        ));
    }
    let mut rng = Rng::new(opts.seed);
    let labels = balanced_labels(ds.num_classes(), opts.samples);
    let (w, x) = generate_samples(gen, table, &labels, opts.noisy_conditioning, &mut rng)?;
    let coverage = mode_coverage(&x, &labels, ds.spec(), opts.coverage_radius)?;
    let dispersion = latent_dispersion(&w, &labels, ds.num_classes())?;

    let generated = match &sources.gen {
        Some(g) => g.clone(),
        None => FeatureSet::new(x, Some(labels), "generated")?,
    };
    let real = match &sources.real {
        Some(r) => r.clone(),
        None => balanced_resample(ds, opts.samples, &mut rng)?,
    };
    if real.dim() != generated.dim() {
        return Err(Error::shape(
            "evaluate",
            format!("reference features have dim {}, generated {}", real.dim(), generated.dim()),
        ));
    }
    let fid = frechet_distance(
        &FeatureStats::from_matrix(real.features())?,
        &FeatureStats::from_matrix(generated.features())?,
    )?;
    let pr = precision_recall(&real, &generated, opts.pr_k)?;
    let ifid_real = if real.labels().is_some() {
        real.clone()
    } else {
        FeatureSet::new(ds.samples().clone(), Some(ds.labels().to_vec()), "dataset")?
    };
    let ifid = intra_class_fid(&ifid_real, &generated, opts.min_per_class)?;
    Ok(EvalReport {
        fid,
        precision: pr.precision,
        recall: pr.recall,
        ifid,
        coverage,
        dispersion,
        tail: tail_classes(&ds.class_counts(), opts.tail_classes),
    })
}

/// Metrics recorded during training.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iter: u64,
    pub fid: f64,
    pub precision: f64,
    pub recall: f64,
    pub mean_coverage: f64,
    pub tail_coverage: f64,
    pub min_dispersion: Option<f64>,
}

/// Quick evaluation at the state's current iteration. Uses its own random
/// stream so the training trajectory does not depend on the snapshot cadence.
pub fn snapshot(state: &TrainState, ds: &Dataset) -> Result<Snapshot> {
    let cfg = &state.config;
    let mut opts = EvalOptions::from_config(cfg, cfg.seed ^ state.iteration.rotate_left(32) ^ 0x5EED);
    opts.samples = cfg.eval.snapshot_samples;
    let mut rng = Rng::new(opts.seed);
    let labels = balanced_labels(ds.num_classes(), opts.samples);
    let (w, x) = generate_samples(&state.generator, &state.table, &labels, opts.noisy_conditioning, &mut rng)?;
    let coverage = mode_coverage(&x, &labels, ds.spec(), opts.coverage_radius)?;
    let dispersion = latent_dispersion(&w, &labels, ds.num_classes())?;
    let generated = FeatureSet::new(x, Some(labels), "generated")?;
    let real = balanced_resample(ds, opts.samples, &mut rng)?;
    let fid = frechet_distance(
        &FeatureStats::from_matrix(real.features())?,
        &FeatureStats::from_matrix(generated.features())?,
    )?;
    let k = opts.pr_k.min(opts.samples.saturating_sub(1)).max(1);
    let pr = precision_recall(&real, &generated, k)?;
    let tail = tail_classes(&ds.class_counts(), opts.tail_classes);
    Ok(Snapshot {
        iter: state.iteration,
        fid,
        precision: pr.precision,
        recall: pr.recall,
        mean_coverage: coverage.iter().sum::<f64>() / coverage.len() as f64,
        tail_coverage: tail.iter().map(|&c| coverage[c]).sum::<f64>() / tail.len() as f64,
        min_dispersion: dispersion_summary(&dispersion).map(|s| s.0),
    })
}

/// Mean and sample standard deviation of each scalar metric over runs.
pub fn summarize(reports: &[EvalReport]) -> Vec<(&'static str, f64, f64)> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .scalars()
        .iter()
        .enumerate()
        .map(|(i, &(name, _))| {
            let vals: Vec<f64> = reports.iter().map(|r| r.scalars()[i].1).collect();
            let (mean, std) = mean_std(&vals);
            (name, mean, std)
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    fn small_config() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.data.num_classes = 4;
        cfg.data.n_max = 200;
        cfg.data.rho = 4.0;
        cfg.model.latent_dim = 4;
        cfg.model.synthesis_width = 8;
        cfg.model.disc_width = 8;
        cfg.eval.samples = 400;
        cfg.eval.min_per_class = 20;
        cfg
    }

    #[test]
    fn balanced_labels_split_evenly() {
        assert_eq!(balanced_labels(3, 7), vec![0, 0, 0, 1, 1, 2, 2]);
        assert_eq!(balanced_labels(2, 4), vec![0, 0, 1, 1]);
        assert_eq!(tail_classes(&[10, 5, 5, 1], 3), vec![3, 2, 1]);
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let cfg = small_config();
        let ds = synth_dataset(&cfg.data.profile(), &cfg.data.spec().unwrap(), &mut Rng::new(0)).unwrap();
        let state = TrainState::new(cfg.clone(), &ds.class_counts()).unwrap();
        let opts = EvalOptions::from_config(&cfg, 1);
        let report =
            evaluate(&state.generator, &state.table, &ds, &opts, &EvalSources::self_eval(&ds).unwrap()).unwrap();
        assert!(report.fid.abs() < 1e-12);
        assert_eq!((report.precision, report.recall), (1.0, 1.0));
        assert!(report.ifid.per_class.iter().all(|(_, v)| v.abs() < 1e-12));
    }

    #[test]
    fn evaluation_is_deterministic_per_seed() {
        let cfg = small_config();
        let ds = synth_dataset(&cfg.data.profile(), &cfg.data.spec().unwrap(), &mut Rng::new(0)).unwrap();
        let state = TrainState::new(cfg.clone(), &ds.class_counts()).unwrap();
        let run = |seed| {
            evaluate(
                &state.generator,
                &state.table,
                &ds,
                &EvalOptions::from_config(&cfg, seed),
                &EvalSources::default(),
            )
            .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3).fid, run(4).fid);
        let summary = summarize(&[run(3), run(4), run(5)]);
        assert_eq!(summary[0].0, "fid");
        assert!(summary[0].2 > 0.0);
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
    }

    #[test]
    fn mismatched_reference_dim_is_rejected() {
        let cfg = small_config();
        let ds = synth_dataset(&cfg.data.profile(), &cfg.data.spec().unwrap(), &mut Rng::new(0)).unwrap();
        let state = TrainState::new(cfg.clone(), &ds.class_counts()).unwrap();
        let real = FeatureSet::new(Matrix::zeros(10, 3), None, "x").unwrap();
        let sources = EvalSources { real: Some(real), gen: None };
        let err = evaluate(&state.generator, &state.table, &ds, &EvalOptions::from_config(&cfg, 0), &sources);
        assert!(matches!(err, Err(Error::Shape { .. })));
    }
}
