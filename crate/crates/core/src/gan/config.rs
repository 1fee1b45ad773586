//! Training configuration, parsed from TOML with unknown keys rejected.

use serde::{Deserialize, Serialize};

use crate::data::{LTProfile, ModeGridSpec, SamplingStrategy};
use crate::error::{Error, Result};
use crate::numcore::AdamHyper;
use crate::twins_loss::TwinsLossConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    /// Metric snapshot cadence in iterations; 0 disables snapshots.
    pub eval_every: u64,
    /// Checkpoint cadence in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub out_dir: Option<String>,
    pub noise: NoiseConfig,
    pub twins: TwinsLossConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 20_000,
            batch_size: 64,
            eval_every: 0,
            checkpoint_every: 0,
            out_dir: None,
            noise: NoiseConfig::default(),
            twins: TwinsLossConfig::default(),
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Per-class embedding noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub alpha: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sigma: 0.75, alpha: 0.99 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub mapping_layers: usize,
    /// Defaults to `2 * latent_dim`.
    pub mapping_width: Option<usize>,
    pub synthesis_layers: usize,
    pub synthesis_width: usize,
    pub disc_layers: usize,
    pub disc_width: usize,
    pub slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 64,
            mapping_layers: 2,
            mapping_width: None,
            synthesis_layers: 3,
            synthesis_width: 64,
            disc_layers: 3,
            disc_width: 64,
            slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn mapping_width(&self) -> usize {
        self.mapping_width.unwrap_or(2 * self.latent_dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub g_lr: f64,
    pub d_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub r1_gamma: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { g_lr: 0.0025, d_lr: 0.0025, beta1: 0.0, beta2: 0.99, eps: 1e-8, r1_gamma: 0.01 }
    }
}

impl OptimConfig {
    pub fn g_hyper(&self) -> AdamHyper {
        AdamHyper { lr: self.g_lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn d_hyper(&self) -> AdamHyper {
        AdamHyper { lr: self.d_lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// Synthetic long-tailed dataset on a grid of mode rings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub num_classes: usize,
    pub n_max: u64,
    pub rho: f64,
    pub modes_per_class: usize,
    pub ring_radius: f64,
    pub grid_cols: usize,
    pub grid_spacing: f64,
    pub mode_std: f64,
    /// Seed of the dataset draw, independent of the training seed.
    pub seed: u64,
    pub sampling: SamplingStrategy,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            num_classes: 10,
            n_max: 5000,
            rho: 100.0,
            modes_per_class: 8,
            ring_radius: 2.0,
            grid_cols: 4,
            grid_spacing: 6.0,
            mode_std: 0.05,
            seed: 0,
            sampling: SamplingStrategy::Instance,
        }
    }
}

impl DataConfig {
    pub fn profile(&self) -> LTProfile {
        LTProfile { num_classes: self.num_classes, n_max: self.n_max, rho: self.rho }
    }

    pub fn spec(&self) -> Result<ModeGridSpec> {
        ModeGridSpec::ring_grid(
            self.num_classes,
            self.modes_per_class,
            self.ring_radius,
            self.grid_cols,
            self.grid_spacing,
            self.mode_std,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Generated samples per evaluation, split evenly over classes.
    pub samples: usize,
    pub pr_k: usize,
    pub min_per_class: usize,
    /// Mode-coverage radius; defaults to three mode standard deviations.
    pub coverage_radius: Option<f64>,
    /// Condition generation on noise-augmented embeddings, as during training.
    pub noisy_conditioning: bool,
    /// Number of rarest classes averaged into the tail-coverage summary.
    pub tail_classes: usize,
    /// Generated samples per training-time metric snapshot.
    pub snapshot_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 2000,
            pr_k: crate::metrics::DEFAULT_PR_K,
            min_per_class: crate::metrics::DEFAULT_MIN_PER_CLASS,
            coverage_radius: None,
            noisy_conditioning: true,
            tail_classes: 3,
            snapshot_samples: 500,
        }
    }
}

/// Which mechanism a configuration exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Baseline,
    NoiseOnly,
    TwinsOnly,
    NoisyTwins,
}

impl RunKind {
    pub fn tag(self) -> &'static str {
        match self {
            RunKind::Baseline => "baseline",
            RunKind::NoiseOnly => "noise-only",
            RunKind::TwinsOnly => "twins-only",
            RunKind::NoisyTwins => "noisytwins",
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
    }
    Ok(())
}

impl TrainConfig {
    /// The configuration with NoisyTwins switched off (`σ = 0`, `λ = 0`).
    pub fn baseline(mut self) -> Self {
        self.noise.sigma = 0.0;
        self.twins.lambda = 0.0;
        self
    }

    pub fn kind(&self) -> RunKind {
        match (self.noise.sigma > 0.0, self.twins.lambda > 0.0) {
            (false, false) => RunKind::Baseline,
            (true, false) => RunKind::NoiseOnly,
            (false, true) => RunKind::TwinsOnly,
            (true, true) => RunKind::NoisyTwins,
        }
    }

    pub fn coverage_radius(&self) -> f64 {
        self.eval.coverage_radius.unwrap_or(3.0 * self.data.mode_std)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::param("batch_size", format!("must be >= 2, got {}", self.batch_size)));
        }
        if self.seed > i64::MAX as u64 || self.data.seed > i64::MAX as u64 {
            return Err(Error::param("seed", "must be < 2^63"));
        }
        if !self.noise.sigma.is_finite() || self.noise.sigma < 0.0 {
            return Err(Error::param("noise.sigma", format!("must be finite and >= 0, got {}", self.noise.sigma)));
        }
        if !(0.0..1.0).contains(&self.noise.alpha) {
            return Err(Error::param("noise.alpha", format!("must lie in [0, 1), got {}", self.noise.alpha)));
        }
        self.twins.validate()?;
        let m = &self.model;
        if m.latent_dim == 0 || m.mapping_width() == 0 || m.synthesis_width == 0 || m.disc_width == 0 {
            return Err(Error::param("model", "dimensions and widths must be >= 1"));
        }
        if !(m.slope >= 0.0 && m.slope < 1.0) {
            return Err(Error::param("model.slope", format!("must lie in [0, 1), got {}", m.slope)));
        }
        let o = &self.optim;
        positive("optim.g_lr", o.g_lr)?;
        positive("optim.d_lr", o.d_lr)?;
        positive("optim.eps", o.eps)?;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::param("optim.beta", "beta1 and beta2 must lie in [0, 1)"));
        }
        if !o.r1_gamma.is_finite() || o.r1_gamma < 0.0 {
            return Err(Error::param("optim.r1_gamma", format!("must be finite and >= 0, got {}", o.r1_gamma)));
        }
        self.data.profile().validate()?;
        self.data.spec()?;
        let e = &self.eval;
        if e.samples < self.data.num_classes || e.snapshot_samples < self.data.num_classes {
            return Err(Error::param("eval.samples", "need at least one sample per class"));
        }
        if e.pr_k == 0 {
            return Err(Error::param("eval.pr_k", "must be >= 1"));
        }
        positive("eval.coverage_radius", self.coverage_radius())?;
        if e.tail_classes == 0 || e.tail_classes > self.data.num_classes {
            return Err(Error::param("eval.tail_classes", "must lie in 1..=num_classes"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text)
            .map_err(|e| Error::param("config", e.message().to_string() + &span_hint(text, e.span())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::param("config", e.to_string()))
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.kind(), RunKind::NoisyTwins);
        assert_eq!(cfg.clone().baseline().kind(), RunKind::Baseline);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = TrainConfig::from_toml_str("seed = 3\n[twins]\nlambda = 0.0\n[noise]\nsigma = 0.0\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.kind(), RunKind::Baseline);
        assert_eq!(cfg.twins.gamma, 0.05);
        let cfg =
            TrainConfig::from_toml_str("[twins]\ninvariance_form = \"barlow\"\nnormalization = \"raw\"\n").unwrap();
        assert_eq!(cfg.twins.invariance_form, crate::twins_loss::InvarianceForm::Barlow);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let err = TrainConfig::from_toml_str("[twins]\nlamda = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        assert!(TrainConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(TrainConfig::from_toml_str("batch_size = 1\n").is_err());
        assert!(TrainConfig::from_toml_str("[noise]\nalpha = 1.0\n").is_err());
        assert!(TrainConfig::from_toml_str("[data]\nrho = 0.5\n").is_err());
    }
}
