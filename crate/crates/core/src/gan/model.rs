//! Generator and discriminator networks with their adversarial losses.

use crate::error::{Error, Result};
use crate::latent::{map_forward, MappingNet};
use crate::numcore::{Matrix, Mlp, MlpTrace, MlpVars, Rng, Tape, Var};

use super::config::ModelConfig;

pub const SAMPLE_DIM: usize = 2;

/// Mapping network followed by a synthesis MLP from `w` to a 2-D point.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub mapping: MappingNet,
    pub synthesis: Mlp,
}

impl Generator {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let d = cfg.latent_dim;
        let mapping = MappingNet::new(d, cfg.mapping_layers, cfg.mapping_width(), cfg.slope, rng)?;
        let mut widths = vec![d];
        widths.extend(std::iter::repeat_n(cfg.synthesis_width, cfg.synthesis_layers));
        widths.push(SAMPLE_DIM);
        let synthesis = Mlp::new(&widths, cfg.slope, rng)?;
        Self::from_parts(mapping, synthesis)
    }

    pub fn from_parts(mapping: MappingNet, synthesis: Mlp) -> Result<Self> {
        if synthesis.input_width() != mapping.dim() || synthesis.output_width() != SAMPLE_DIM {
            return Err(Error::shape(
                "Generator",
                format!(
                    "synthesis {}->{} for latent dim {}",
                    synthesis.input_width(),
                    synthesis.output_width(),
                    mapping.dim()
                ),
            ));
        }
        Ok(Generator { mapping, synthesis })
    }

    pub fn dim(&self) -> usize {
        self.mapping.dim()
    }

    /// Untaped `(w, x)` for latent codes `z` and conditioning `c`.
    pub fn generate(&self, z: &Matrix, c: &Matrix) -> Result<(Matrix, Matrix)> {
        let w = self.mapping.map(z, c)?;
        let x = self.synthesis.forward(&w)?;
        Ok((w, x))
    }

    pub fn param_count(&self) -> usize {
        self.mapping.mlp().param_count() + self.synthesis.param_count()
    }
}

/// MLP from `[x ‖ c̃]` to one logit per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub mlp: Mlp,
}

impl Discriminator {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut widths = vec![SAMPLE_DIM + cfg.latent_dim];
        widths.extend(std::iter::repeat_n(cfg.disc_width, cfg.disc_layers));
        widths.push(1);
        Self::from_mlp(Mlp::new(&widths, cfg.slope, rng)?)
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.output_width() != 1 || mlp.input_width() <= SAMPLE_DIM {
            return Err(Error::shape(
                "Discriminator",
                format!("widths {:?} must map sample + embedding to one logit", mlp.widths()),
            ));
        }
        Ok(Discriminator { mlp })
    }

    /// Embedding dimension the discriminator is conditioned on.
    pub fn dim(&self) -> usize {
        self.mlp.input_width() - SAMPLE_DIM
    }

    pub fn logits(&self, x: &Matrix, c: &Matrix) -> Result<Matrix> {
        self.check(x.shape(), c.shape())?;
        self.mlp.forward(&x.hconcat(c)?)
    }

    /// Taped forward pass, keeping the hidden pre-activations.
    pub fn forward_tape(&self, vars: &MlpVars, x: Var, c: Var, tape: &mut Tape) -> Result<MlpTrace> {
        self.check(tape.value(x).shape(), tape.value(c).shape())?;
        let input = tape.concat_cols(x, c)?;
        self.mlp.forward_tape(vars, input, tape)
    }

    fn check(&self, x: (usize, usize), c: (usize, usize)) -> Result<()> {
        if x.1 != SAMPLE_DIM || c.1 != self.dim() || x.0 != c.0 {
            return Err(Error::shape("Discriminator", format!("x {x:?} and c {c:?}")));
        }
        Ok(())
    }
}

/// `mean(softplus(-real) + softplus(fake))`.
pub fn d_loss(real_logits: Var, fake_logits: Var, tape: &mut Tape) -> Result<Var> {
    let neg = tape.scale(real_logits, -1.0)?;
    let real_term = tape.softplus(neg)?;
    let fake_term = tape.softplus(fake_logits)?;
    let rm = tape.mean(real_term)?;
    let fm = tape.mean(fake_term)?;
    tape.add(rm, fm)
}

/// `mean(softplus(-fake))`.
pub fn g_loss(fake_logits: Var, tape: &mut Tape) -> Result<Var> {
    let neg = tape.scale(fake_logits, -1.0)?;
    let term = tape.softplus(neg)?;
    tape.mean(term)
}

/// `(γ/2) · mean_i ‖∇_x D(x_i, c_i)‖²` from a recorded forward pass.
///
/// The input gradient is rebuilt on the tape by propagating the output weights
/// back through each layer with the activation slopes held fixed, so the
/// penalty itself is differentiable with respect to the weights.
pub fn r1_from_trace(
    disc: &Discriminator,
    vars: &MlpVars,
    trace: &MlpTrace,
    weight: f64,
    tape: &mut Tape,
) -> Result<Var> {
    if !weight.is_finite() || weight < 0.0 {
        return Err(Error::param("r1_gamma", format!("must be finite and >= 0, got {weight}")));
    }
    let bs = tape.value(trace.output).rows();
    let slope = disc.mlp.slope();
    let (w_out, _) = *vars.layers.last().expect("discriminator has layers");
    let ones = tape.constant(Matrix::filled(bs, 1, 1.0));
    let mut g = tape.matmul_nt(ones, w_out)?;
    for (i, &pre) in trace.pre_activations.iter().enumerate().rev() {
        let mask = tape.value(pre).map(|p| if p > 0.0 { 1.0 } else { slope });
        let mask = tape.constant(mask);
        let gated = tape.mul(g, mask)?;
        g = tape.matmul_nt(gated, vars.layers[i].0)?;
    }
    let gx = tape.slice_cols(g, 0, SAMPLE_DIM)?;
    let sq = tape.mul(gx, gx)?;
    let total = tape.sum(sq)?;
    tape.scale(total, weight / (2.0 * bs as f64))
}

pub fn r1_penalty(
    disc: &Discriminator,
    vars: &MlpVars,
    x_real: Var,
    c: Var,
    weight: f64,
    tape: &mut Tape,
) -> Result<Var> {
    let trace = disc.forward_tape(vars, x_real, c, tape)?;
    r1_from_trace(disc, vars, &trace, weight, tape)
}

/// Everything the generator objective consumes besides parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorInputs {
    pub z: Matrix,
    pub labels: Vec<usize>,
    /// Embedding noise of the fake batch, shared with the discriminator.
    pub noise: Matrix,
    /// Independent noise pair for the twin batch; `None` skips the twins loss.
    pub twin_noise: Option<(Matrix, Matrix)>,
    /// Fixed discriminator conditioning; `None` uses the fake batch's values.
    pub disc_condition: Option<Matrix>,
}

/// Tape handles of a generator objective evaluation.
#[derive(Clone, Debug)]
pub struct GeneratorGraph {
    pub total: Var,
    pub l_g: Var,
    pub l_nt: Option<Var>,
    pub w: Var,
    pub mapping: MlpVars,
    pub synthesis: MlpVars,
    pub means: Var,
    /// Discriminator weights, recorded as constants.
    pub discriminator: MlpVars,
}

impl GeneratorGraph {
    /// Trainable handles in the order mapping, synthesis, embedding means.
    pub fn params(&self) -> Vec<Var> {
        let mut v = self.mapping.all();
        v.extend(self.synthesis.all());
        v.push(self.means);
        v
    }
}

/// Records `L_G + λ L_NT` with generator parameters and embedding means as
/// trainable leaves and the discriminator as constants.
pub fn generator_objective(
    gen: &Generator,
    means: &Matrix,
    disc: &Discriminator,
    inputs: &GeneratorInputs,
    twins: &crate::twins_loss::TwinsLossConfig,
    tape: &mut Tape,
) -> Result<GeneratorGraph> {
    use crate::twins_loss::{correlate, noisy_twins_loss, regularized_generator_loss};

    let mapping = gen.mapping.mlp().bind(tape, true);
    let synthesis = gen.synthesis.bind(tape, true);
    let means_var = tape.param(means.clone());
    let disc_vars = disc.mlp.bind(tape, false);
    let z = tape.constant(inputs.z.clone());

    let conditioned = |noise: &Matrix, tape: &mut Tape| -> Result<Var> {
        let rows = tape.gather_rows(means_var, &inputs.labels)?;
        let n = tape.constant(noise.clone());
        tape.add(rows, n)
    };
    let c = conditioned(&inputs.noise, tape)?;
    let w = map_forward(&gen.mapping, &mapping, z, c, tape)?;
    let x = gen.synthesis.forward_tape(&synthesis, w, tape)?.output;
    // The discriminator sees the same conditioning values, without a path back
    // into the embedding table.
    let c_disc = match &inputs.disc_condition {
        Some(m) if m.shape() == tape.value(c).shape() => tape.constant(m.clone()),
        Some(m) => {
            return Err(Error::shape(
                "generator_objective",
                format!("conditioning override {:?} vs {:?}", m.shape(), tape.value(c).shape()),
            ))
        }
        None => tape.constant(tape.value(c).clone()),
    };
    let logits = disc.forward_tape(&disc_vars, x, c_disc, tape)?.output;
    let l_g = g_loss(logits, tape)?;

    let (total, l_nt) = match &inputs.twin_noise {
        Some((na, nb)) => {
            let ca = conditioned(na, tape)?;
            let cb = conditioned(nb, tape)?;
            let wa = map_forward(&gen.mapping, &mapping, z, ca, tape)?;
            let wb = map_forward(&gen.mapping, &mapping, z, cb, tape)?;
            let corr = correlate(wa, wb, twins.normalization, tape)?;
            let l_nt = noisy_twins_loss(corr, twins, tape)?;
            (regularized_generator_loss(l_g, l_nt, twins.lambda, tape)?, Some(l_nt))
        }
        None => (l_g, None),
    };
    Ok(GeneratorGraph { total, l_g, l_nt, w, mapping, synthesis, means: means_var, discriminator: disc_vars })
}
