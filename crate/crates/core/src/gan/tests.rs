use super::*;
use crate::data::{sample_batch, synth_dataset, Dataset};
use crate::error::Error;
use crate::latent::{sample_noise, MappingNet};
use crate::numcore::{gaussian_sample, grad_check, Linear, Matrix, Mlp, Rng, Tape};
use crate::twins_loss::InvarianceForm;

fn tiny_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.iterations = 5;
    cfg.batch_size = 16;
    cfg.data.num_classes = 4;
    cfg.data.n_max = 100;
    cfg.data.rho = 10.0;
    cfg.model.latent_dim = 4;
    cfg.model.synthesis_width = 8;
    cfg.model.synthesis_layers = 2;
    cfg.model.disc_width = 8;
    cfg.model.disc_layers = 2;
    cfg.eval.samples = 40;
    cfg.eval.snapshot_samples = 40;
    cfg
}

fn dataset(cfg: &TrainConfig) -> Dataset {
    synth_dataset(&cfg.data.profile(), &cfg.data.spec().unwrap(), &mut Rng::new(cfg.data.seed)).unwrap()
}

#[test]
fn zero_iterations_returns_initial_state() {
    let mut cfg = tiny_config();
    cfg.iterations = 0;
    let ds = dataset(&cfg);
    let state = train(&cfg, &ds, &mut NoopObserver).unwrap();
    let fresh = TrainState::new(cfg, &ds.class_counts()).unwrap();
    assert_eq!(state.iteration, 0);
    assert!(state.log.records.is_empty());
    assert_eq!(state.generator, fresh.generator);
    assert_eq!(state.discriminator, fresh.discriminator);
}

#[test]
fn one_step_updates_generator_and_logs() {
    let cfg = tiny_config();
    let ds = dataset(&cfg);
    let mut state = TrainState::new(cfg.clone(), &ds.class_counts()).unwrap();
    let before = state.clone();
    let (x, labels) = sample_batch(&ds, &mut Rng::new(1), cfg.batch_size, cfg.data.sampling).unwrap();
    let rec = train_step(&mut state, &x, &labels).unwrap();
    assert_eq!(rec.iter, 1);
    assert_eq!(state.iteration, 1);
    assert_eq!(state.log.records, vec![rec]);
    assert_ne!(state.generator.mapping, before.generator.mapping);
    assert_ne!(state.generator.synthesis, before.generator.synthesis);
    assert_ne!(state.discriminator, before.discriminator);
    assert_ne!(state.table.means(), before.table.means());
    assert!(rec.l_nt > 0.0);
    assert_eq!(state.adam_g.step_count(), 1);
    assert_eq!(state.adam_d.step_count(), 1);
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny_config();
    let ds = dataset(&cfg);
    let a = train(&cfg, &ds, &mut NoopObserver).unwrap();
    let b = train(&cfg, &ds, &mut NoopObserver).unwrap();
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    assert_eq!(a.log.records.len(), 5);
    assert!(a.log.to_csv().starts_with(RUN_LOG_HEADER));
}

#[test]
fn baseline_trajectory_ignores_twins_and_schedule_settings() {
    let mut base = tiny_config().baseline();
    base.iterations = 4;
    let ds = dataset(&base);
    let reference = train(&base, &ds, &mut NoopObserver).unwrap().log.to_csv();
    let mut other = base.clone();
    other.twins.gamma = 0.7;
    other.twins.invariance_form = InvarianceForm::Barlow;
    other.noise.alpha = 0.0;
    assert_eq!(train(&other, &ds, &mut NoopObserver).unwrap().log.to_csv(), reference);
    assert!(train(&base, &ds, &mut NoopObserver).unwrap().log.records.iter().all(|r| r.l_nt == 0.0));
}

#[test]
fn snapshots_follow_cadence() {
    let mut cfg = tiny_config();
    cfg.iterations = 10;
    cfg.eval_every = 3;
    let ds = dataset(&cfg);
    let state = train(&cfg, &ds, &mut NoopObserver).unwrap();
    assert_eq!(state.log.snapshots.len(), 3);
    assert_eq!(state.log.snapshots.iter().map(|s| s.iter).collect::<Vec<_>>(), vec![3, 6, 9]);
    cfg.eval_every = 0;
    let plain = train(&cfg, &ds, &mut NoopObserver).unwrap();
    assert_eq!(plain.log.to_csv(), state.log.to_csv());
}

#[test]
fn divergence_names_the_term_and_leaves_state_untouched() {
    let cfg = tiny_config();
    let ds = dataset(&cfg);
    let mut state = TrainState::new(cfg.clone(), &ds.class_counts()).unwrap();
    state.discriminator.mlp.layers_mut()[0].weight.set(0, 0, f64::NAN);
    let before = state.clone();
    let (x, labels) = sample_batch(&ds, &mut Rng::new(1), cfg.batch_size, cfg.data.sampling).unwrap();
    match train_step(&mut state, &x, &labels) {
        Err(Error::Numeric { term }) => assert_eq!(term, "L_D"),
        other => panic!("{other:?}"),
    }
    assert_eq!(state.iteration, 0);
    assert_eq!(state.generator, before.generator);
    assert!(state.log.records.is_empty());
}

#[derive(Default)]
struct Recorder {
    steps: u64,
    checkpoints: Vec<u64>,
    aborted: Option<(u64, String)>,
    finished: bool,
}

impl TrainObserver for Recorder {
    fn on_step(&mut self, _: &TrainState, _: &LogRecord) -> crate::error::Result<()> {
        self.steps += 1;
        Ok(())
    }
    fn on_checkpoint(&mut self, state: &TrainState) -> crate::error::Result<()> {
        self.checkpoints.push(state.iteration);
        Ok(())
    }
    fn on_finish(&mut self, _: &TrainState) -> crate::error::Result<()> {
        self.finished = true;
        Ok(())
    }
    fn on_abort(&mut self, state: &TrainState, error: &Error) -> crate::error::Result<()> {
        self.aborted = Some((state.iteration, error.to_string()));
        Ok(())
    }
}

#[test]
fn observer_sees_checkpoints_and_aborts() {
    let mut cfg = tiny_config();
    cfg.iterations = 7;
    cfg.checkpoint_every = 3;
    let ds = dataset(&cfg);
    let mut rec = Recorder::default();
    train(&cfg, &ds, &mut rec).unwrap();
    assert_eq!((rec.steps, rec.checkpoints.clone(), rec.finished), (7, vec![3, 6], true));

    cfg.optim.g_lr = 1e300;
    cfg.optim.d_lr = 1e300;
    cfg.iterations = 50;
    let mut rec = Recorder::default();
    let err = train(&cfg, &ds, &mut rec).unwrap_err();
    assert!(err.is_divergence(), "{err}");
    let (at, msg) = rec.aborted.unwrap();
    assert_eq!(at, rec.steps);
    assert_eq!(msg, err.to_string());
    assert!(!rec.finished);
}

#[test]
fn checkpoint_round_trip() {
    let cfg = tiny_config();
    let ds = dataset(&cfg);
    let state = train(&cfg, &ds, &mut NoopObserver).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ntck");
    save_checkpoint(&path, &state).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.generator, state.generator);
    assert_eq!(ck.discriminator, state.discriminator);
    assert_eq!(ck.table, state.table);
    assert_eq!(ck.adam_g, state.adam_g);
    assert_eq!(ck.adam_d, state.adam_d);
    assert_eq!(ck.iteration, 5);
    assert_eq!(ck.config, cfg);

    let (table, mapping) = crate::latent::load_latent(&path).unwrap();
    assert_eq!((table, mapping), (state.table.clone(), state.generator.mapping.clone()));

    let bytes = std::fs::read(&path).unwrap();
    for cut in [3, 40, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })), "cut at {cut}");
    }
}

fn objective_inputs(
    seed: u64,
    d: usize,
    bs: usize,
    classes: usize,
) -> (Generator, Matrix, Discriminator, GeneratorInputs) {
    let mut cfg = ModelConfig { latent_dim: d, mapping_width: Some(2 * d), ..ModelConfig::default() };
    cfg.synthesis_width = 16;
    cfg.disc_width = 16;
    let mut rng = Rng::new(seed);
    let counts: Vec<u64> = (0..classes as u64).map(|c| 100 / (c + 1)).collect();
    let table = crate::latent::EmbeddingTable::new(&counts, d, 0.75, 0.99, &mut rng).unwrap();
    let gen = Generator::new(&cfg, &mut rng).unwrap();
    let disc = Discriminator::new(&cfg, &mut rng).unwrap();
    let labels: Vec<usize> = (0..bs).map(|_| rng.below(classes)).collect();
    let z = gaussian_sample(&mut rng, bs, d, 0.0, 1.0).unwrap();
    let noise = sample_noise(&table, &labels, &mut rng).unwrap();
    let na = sample_noise(&table, &labels, &mut rng).unwrap();
    let nb = sample_noise(&table, &labels, &mut rng).unwrap();
    let inputs = GeneratorInputs { z, labels, noise, twin_noise: Some((na, nb)), disc_condition: None };
    (gen, table.means().clone(), disc, inputs)
}

/// Worst relative error of the generator objective's gradient with respect to
/// mapping-network weights and embedding means.
pub(crate) fn objective_gradient_error(seed: u64, d: usize, bs: usize) -> f64 {
    let (gen, means, disc, mut inputs) = objective_inputs(seed, d, bs, 5);
    let mut condition = means.select_rows(&inputs.labels);
    condition.add_assign(&inputs.noise);
    inputs.disc_condition = Some(condition);
    let twins = crate::twins_loss::TwinsLossConfig::SMALL_DATASET;
    let mut tape = Tape::new();
    let graph = generator_objective(&gen, &means, &disc, &inputs, &twins, &mut tape).unwrap();
    let grads = tape.backward(graph.total).unwrap();
    let pattern = tape.activation_pattern();
    let mut vars = graph.mapping.all();
    vars.push(graph.means);
    let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();
    let mut params: Vec<Matrix> = gen.mapping.mlp().params().into_iter().cloned().collect();
    params.push(means);
    let slope = gen.mapping.mlp().slope();
    grad_check(
        |p| {
            let (net, m) = p.split_at(p.len() - 1);
            let layers = net.chunks(2).map(|wb| Linear { weight: wb[0].clone(), bias: wb[1].clone() }).collect();
            let mapping = MappingNet::from_mlp(Mlp::from_layers(layers, slope).unwrap()).unwrap();
            let g = Generator::from_parts(mapping, gen.synthesis.clone()).unwrap();
            let mut t = Tape::with_activation_pattern(pattern.clone());
            let graph = generator_objective(&g, &m[0], &disc, &inputs, &twins, &mut t).unwrap();
            t.scalar(graph.total)
        },
        &params,
        &analytic,
        1e-5,
    )
    .unwrap()
}

#[test]
fn generator_objective_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let err = objective_gradient_error(seed, 8, 16);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn discriminator_is_constant_in_the_generator_objective() {
    let (gen, means, disc, inputs) = objective_inputs(1, 4, 8, 3);
    let mut tape = Tape::new();
    let graph = generator_objective(&gen, &means, &disc, &inputs, &Default::default(), &mut tape).unwrap();
    let grads = tape.backward(graph.total).unwrap();
    assert!(graph.discriminator.all().iter().all(|&v| grads.get(v).is_none()));
    assert!(graph.params().iter().all(|&v| grads.get(v).is_some()));
}

#[test]
fn twins_loss_reaches_the_mapping_network() {
    let (gen, means, disc, inputs) = objective_inputs(2, 4, 8, 3);
    let mut twins = crate::twins_loss::TwinsLossConfig::SMALL_DATASET;
    let grad_norm = |twins: &crate::twins_loss::TwinsLossConfig, inputs: &GeneratorInputs| {
        let mut tape = Tape::new();
        let graph = generator_objective(&gen, &means, &disc, inputs, twins, &mut tape).unwrap();
        let grads = tape.backward(graph.total).unwrap();
        graph.mapping.all().iter().map(|&v| grads.wrt(v).frobenius_norm().powi(2)).sum::<f64>().sqrt()
    };
    let without = GeneratorInputs { twin_noise: None, ..inputs.clone() };
    let base = grad_norm(&twins, &without);
    let with = grad_norm(&twins, &inputs);
    assert!((with - base).abs() > 1e-8, "{with} vs {base}");
    twins.lambda = 0.0;
    assert_eq!(grad_norm(&twins, &inputs), base);
}
