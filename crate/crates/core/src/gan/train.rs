//! Alternating discriminator / generator updates and the run log.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{sample_batch, Dataset};
use crate::error::{Error, Result};
use crate::eval::{snapshot, Snapshot};
use crate::latent::{augmented_rows, sample_noise, twin_batch, EmbeddingTable};
use crate::metrics::{dispersion_summary, latent_dispersion};
use crate::numcore::{adam_step, gaussian_sample, AdamState, Matrix, Rng, Tape};

use super::config::TrainConfig;
use super::model::{d_loss, generator_objective, r1_from_trace, Discriminator, Generator, GeneratorInputs};

pub const RUN_LOG_HEADER: &str = "iter,L_D,L_G,L_NT,min_class_dispersion,mean_class_dispersion";
pub const SNAPSHOT_HEADER: &str = "iter,fid,precision,recall,mean_coverage,tail_coverage,min_dispersion";

/// Scalars recorded after one training step. Dispersions come from the
/// generator batch and are `None` when no class appears twice in it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iter: u64,
    pub l_d: f64,
    pub l_g: f64,
    pub l_nt: f64,
    pub min_dispersion: Option<f64>,
    pub mean_dispersion: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(RUN_LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iter,
                r.l_d,
                r.l_g,
                r.l_nt,
                opt(r.min_dispersion),
                opt(r.mean_dispersion)
            );
        }
        s
    }

    pub fn snapshots_csv(&self) -> String {
        let mut s = String::from(SNAPSHOT_HEADER);
        s.push('\n');
        for p in &self.snapshots {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                p.iter,
                p.fid,
                p.precision,
                p.recall,
                p.mean_coverage,
                p.tail_coverage,
                opt(p.min_dispersion)
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_snapshots_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.snapshots_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Networks, embeddings, optimizer state, and the log of a training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub table: EmbeddingTable,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    /// Completed generator steps.
    pub iteration: u64,
    pub rng: Rng,
    pub config: TrainConfig,
    pub log: RunLog,
}

impl TrainState {
    /// Fresh networks and embeddings initialized from `config.seed`.
    pub fn new(config: TrainConfig, class_counts: &[u64]) -> Result<Self> {
        config.validate()?;
        if class_counts.len() != config.data.num_classes {
            return Err(Error::param(
                "class_counts",
                format!("{} counts for {} classes", class_counts.len(), config.data.num_classes),
            ));
        }
        let mut rng = Rng::new(config.seed);
        let m = &config.model;
        let table = EmbeddingTable::new(class_counts, m.latent_dim, config.noise.sigma, config.noise.alpha, &mut rng)?;
        let generator = Generator::new(m, &mut rng)?;
        let discriminator = Discriminator::new(m, &mut rng)?;
        let adam_g = AdamState::new(config.optim.g_hyper(), generator_params(&generator, &table));
        let adam_d = AdamState::new(config.optim.d_hyper(), discriminator.mlp.params());
        Ok(TrainState {
            generator,
            discriminator,
            table,
            adam_g,
            adam_d,
            iteration: 0,
            rng,
            config,
            log: RunLog::default(),
        })
    }
}

fn generator_params<'a>(gen: &'a Generator, table: &'a EmbeddingTable) -> Vec<&'a Matrix> {
    let mut p = gen.mapping.mlp().params();
    p.extend(gen.synthesis.params());
    p.push(table.means());
    p
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric { term: term.to_string() })
    }
}

fn finite_grads(term: &str, grads: &[Matrix]) -> Result<()> {
    if grads.iter().all(Matrix::is_finite) {
        Ok(())
    } else {
        Err(Error::Numeric { term: term.to_string() })
    }
}

/// One discriminator update (`L_D` + R1) followed by one generator update
/// (`L_G + λ L_NT`), appending a record to the run log. On error the state
/// is left unchanged.
pub fn train_step(state: &mut TrainState, x_real: &Matrix, labels: &[usize]) -> Result<LogRecord> {
    let cfg = &state.config;
    let bs = cfg.batch_size;
    if labels.len() != bs || x_real.shape() != (bs, super::model::SAMPLE_DIM) {
        return Err(Error::shape(
            "train_step",
            format!("batch {:?} with {} labels, batch size {bs}", x_real.shape(), labels.len()),
        ));
    }
    let d = state.table.dim();
    // State is only committed once both updates succeed.
    let mut rng_next = state.rng.clone();
    let rng = &mut rng_next;
    let z = gaussian_sample(rng, bs, d, 0.0, 1.0)?;
    let noise_fake = sample_noise(&state.table, labels, rng)?;
    let noise_real = sample_noise(&state.table, labels, rng)?;
    let twin_noise = if cfg.twins.lambda > 0.0 {
        let twins = twin_batch(&state.table, labels, &z, rng)?;
        Some((twins.noise_a, twins.noise_b))
    } else {
        None
    };

    // Discriminator step.
    let c_fake = augmented_rows(&state.table, labels, &noise_fake)?;
    let c_real = augmented_rows(&state.table, labels, &noise_real)?;
    let (_, x_fake) = state.generator.generate(&z, &c_fake)?;
    let disc = &state.discriminator;
    let mut tape = Tape::new();
    let vars = disc.mlp.bind(&mut tape, true);
    let (xr, cr) = (tape.constant(x_real.clone()), tape.constant(c_real));
    let real = disc.forward_tape(&vars, xr, cr, &mut tape)?;
    let (xf, cf) = (tape.constant(x_fake), tape.constant(c_fake));
    let fake = disc.forward_tape(&vars, xf, cf, &mut tape)?;
    let ld = d_loss(real.output, fake.output, &mut tape)?;
    let l_d = finite("L_D", tape.scalar(ld))?;
    let d_total = if cfg.optim.r1_gamma > 0.0 {
        let r1 = r1_from_trace(disc, &vars, &real, cfg.optim.r1_gamma, &mut tape)?;
        finite("R1", tape.scalar(r1))?;
        tape.add(ld, r1)?
    } else {
        ld
    };
    let mut grads = tape.backward(d_total)?;
    let d_grads: Vec<Matrix> = vars.all().into_iter().map(|v| grads.take(v)).collect();
    finite_grads("discriminator gradient", &d_grads)?;

    // Generator step against the updated discriminator.
    let inputs = GeneratorInputs { z, labels: labels.to_vec(), noise: noise_fake, twin_noise, disc_condition: None };
    let mut d_next = state.discriminator.clone();
    let mut adam_d_next = state.adam_d.clone();
    adam_step(&mut d_next.mlp.params_mut(), &d_grads, &mut adam_d_next)?;

    let mut tape = Tape::new();
    let graph = generator_objective(&state.generator, state.table.means(), &d_next, &inputs, &cfg.twins, &mut tape)?;
    let l_g = finite("L_G", tape.scalar(graph.l_g))?;
    let l_nt = match graph.l_nt {
        Some(v) => finite("L_NT", tape.scalar(v))?,
        None => 0.0,
    };
    finite("L_G + lambda * L_NT", tape.scalar(graph.total))?;
    let dispersion = latent_dispersion(tape.value(graph.w), labels, state.table.num_classes())?;
    let summary = dispersion_summary(&dispersion);
    let mut grads = tape.backward(graph.total)?;
    let g_grads: Vec<Matrix> = graph.params().into_iter().map(|v| grads.take(v)).collect();
    finite_grads("generator gradient", &g_grads)?;

    let mut g_next = state.generator.clone();
    let mut means_next = state.table.means().clone();
    let mut adam_g_next = state.adam_g.clone();
    let mut params = g_next.mapping.mlp_mut().params_mut();
    params.extend(g_next.synthesis.params_mut());
    params.push(&mut means_next);
    adam_step(&mut params, &g_grads, &mut adam_g_next)?;

    state.generator = g_next;
    *state.table.means_mut() = means_next;
    state.adam_g = adam_g_next;
    state.discriminator = d_next;
    state.adam_d = adam_d_next;
    state.rng = rng_next;
    state.iteration += 1;
    let record = LogRecord {
        iter: state.iteration,
        l_d,
        l_g,
        l_nt,
        min_dispersion: summary.map(|s| s.0),
        mean_dispersion: summary.map(|s| s.1),
    };
    state.log.records.push(record);
    Ok(record)
}

/// Hooks invoked by [`train`]. Every method defaults to doing nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _state: &TrainState, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, _state: &TrainState, _snapshot: &Snapshot) -> Result<()> {
        Ok(())
    }

    /// Called every `checkpoint_every` iterations.
    fn on_checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }

    /// Called once after the last iteration.
    fn on_finish(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }

    /// Called with the last consistent state before a failed step's error is returned.
    fn on_abort(&mut self, _state: &TrainState, _error: &Error) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Runs `config.iterations` training steps on `dataset`.
pub fn train(config: &TrainConfig, dataset: &Dataset, observer: &mut dyn TrainObserver) -> Result<TrainState> {
    let mut state = TrainState::new(config.clone(), &dataset.class_counts())?;
    if dataset.num_classes() != config.data.num_classes {
        return Err(Error::param("dataset", "class count differs from the configuration"));
    }
    for _ in 0..config.iterations {
        let (x, labels) = sample_batch(dataset, &mut state.rng, config.batch_size, config.data.sampling)?;
        let record = match train_step(&mut state, &x, &labels) {
            Ok(r) => r,
            Err(e) => {
                observer.on_abort(&state, &e)?;
                return Err(e);
            }
        };
        observer.on_step(&state, &record)?;
        let it = state.iteration;
        if config.eval_every > 0 && it % config.eval_every == 0 {
            let snap = snapshot(&state, dataset)?;
            state.log.snapshots.push(snap.clone());
            observer.on_snapshot(&state, &snap)?;
        }
        if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 {
            observer.on_checkpoint(&state)?;
        }
    }
    observer.on_finish(&state)?;
    Ok(state)
}
