//! Class embeddings, frequency-scaled noise augmentation, twin batches and the
//! mapping network `[z ‖ c̃] -> w`.

use std::path::Path;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Mlp, MlpVars, Rng, Tape, Var};

/// Std of the i.i.d. Gaussian used to initialize class means.
pub const EMBEDDING_INIT_STD: f64 = 0.02;

/// Per-class noise std `σ (1 - α) / (1 - α^n_c)`.
///
/// The ratio is the inverse of the effective number of samples of the class,
/// so rare classes receive more noise. With `α = 0` every class gets `σ`.
pub fn noise_scale(n_c: u64, sigma: f64, alpha: f64) -> Result<f64> {
    if n_c < 1 {
        return Err(Error::param("n_c", "class count must be >= 1"));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::param("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0, 1), got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(sigma);
    }
    let n = n_c as f64;
    Ok(sigma * (1.0 - alpha) / (1.0 - libm::pow(alpha, n)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    means: Matrix,
    class_counts: Vec<u64>,
    sigma: f64,
    alpha: f64,
    class_sigmas: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(class_counts: &[u64], dim: usize, sigma: f64, alpha: f64, rng: &mut Rng) -> Result<Self> {
        let means = Matrix::from_fn(class_counts.len(), dim, |_, _| EMBEDDING_INIT_STD * rng.normal());
        Self::from_parts(means, class_counts.to_vec(), sigma, alpha)
    }

    pub fn from_parts(means: Matrix, class_counts: Vec<u64>, sigma: f64, alpha: f64) -> Result<Self> {
        if class_counts.is_empty() {
            return Err(Error::param("class_counts", "need at least one class"));
        }
        if means.rows() != class_counts.len() || means.cols() == 0 {
            return Err(Error::shape(
                "EmbeddingTable",
                format!("{:?} means for {} classes", means.shape(), class_counts.len()),
            ));
        }
        if !means.is_finite() {
            return Err(Error::Numeric { term: "embedding means".into() });
        }
        let class_sigmas = class_counts.iter().map(|&n| noise_scale(n, sigma, alpha)).collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingTable { means, class_counts, sigma, alpha, class_sigmas })
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn means_mut(&mut self) -> &mut Matrix {
        &mut self.means
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Noise std of class `c`.
    pub fn class_sigma(&self, c: usize) -> Result<f64> {
        self.class_sigmas.get(c).copied().ok_or(Error::Index {
            what: "class labels",
            index: c,
            len: self.num_classes(),
        })
    }

    pub fn class_sigmas(&self) -> &[f64] {
        &self.class_sigmas
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.num_classes()) {
            Some(&bad) => Err(Error::Index { what: "class labels", index: bad, len: self.num_classes() }),
            None => Ok(()),
        }
    }
}

/// One draw `μ_c + ε`, `ε ~ N(0, σ_c² I)`.
pub fn augment_embedding(table: &EmbeddingTable, label: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let s = table.class_sigma(label)?;
    Ok(table.means.row(label).iter().map(|m| m + s * rng.normal()).collect())
}

/// Noise rows `ε_i ~ N(0, σ_{c_i}² I)` for a batch of labels.
pub fn sample_noise(table: &EmbeddingTable, labels: &[usize], rng: &mut Rng) -> Result<Matrix> {
    table.check_labels(labels)?;
    let d = table.dim();
    let mut out = Matrix::zeros(labels.len(), d);
    for (i, &l) in labels.iter().enumerate() {
        let s = table.class_sigmas[l];
        for v in out.row_mut(i) {
            *v = s * rng.normal();
        }
    }
    Ok(out)
}

/// Augmented embeddings `μ_{c_i} + noise_i`.
pub fn augmented_rows(table: &EmbeddingTable, labels: &[usize], noise: &Matrix) -> Result<Matrix> {
    table.check_labels(labels)?;
    if noise.shape() != (labels.len(), table.dim()) {
        return Err(Error::shape("augmented_rows", format!("noise {:?}", noise.shape())));
    }
    table.means.select_rows(labels).add(noise)
}

/// Two independent augmentations of each row's class embedding sharing one `z` row.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinBatch {
    pub z: Matrix,
    pub labels: Vec<usize>,
    pub noise_a: Matrix,
    pub noise_b: Matrix,
    pub c_a: Matrix,
    pub c_b: Matrix,
    pub w_a: Option<Matrix>,
    pub w_b: Option<Matrix>,
}

impl TwinBatch {
    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }

    /// Mapping-network inputs `[z ‖ c̃_a]` and `[z ‖ c̃_b]`.
    pub fn inputs(&self) -> Result<(Matrix, Matrix)> {
        Ok((self.z.hconcat(&self.c_a)?, self.z.hconcat(&self.c_b)?))
    }
}

pub fn twin_batch(table: &EmbeddingTable, labels: &[usize], z: &Matrix, rng: &mut Rng) -> Result<TwinBatch> {
    if z.rows() != labels.len() {
        return Err(Error::shape("twin_batch", format!("{} z rows for {} labels", z.rows(), labels.len())));
    }
    if !z.is_finite() {
        return Err(Error::Numeric { term: "twin_batch z".into() });
    }
    let noise_a = sample_noise(table, labels, rng)?;
    let noise_b = sample_noise(table, labels, rng)?;
    Ok(TwinBatch {
        z: z.clone(),
        labels: labels.to_vec(),
        c_a: augmented_rows(table, labels, &noise_a)?,
        c_b: augmented_rows(table, labels, &noise_b)?,
        noise_a,
        noise_b,
        w_a: None,
        w_b: None,
    })
}

/// MLP from `[z ‖ c̃]` (width `2d`) to `w` (width `d`).
#[derive(Clone, Debug, PartialEq)]
pub struct MappingNet {
    mlp: Mlp,
}

impl MappingNet {
    pub fn new(dim: usize, hidden_layers: usize, hidden_width: usize, slope: f64, rng: &mut Rng) -> Result<Self> {
        let mut widths = vec![2 * dim];
        widths.extend(std::iter::repeat_n(hidden_width, hidden_layers));
        widths.push(dim);
        Self::from_mlp(Mlp::new(&widths, slope, rng)?)
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.input_width() != 2 * mlp.output_width() {
            return Err(Error::shape(
                "MappingNet",
                format!("input width {} must be twice output width {}", mlp.input_width(), mlp.output_width()),
            ));
        }
        Ok(MappingNet { mlp })
    }

    pub fn dim(&self) -> usize {
        self.mlp.output_width()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    /// Untaped `w = MLP([z ‖ c̃])`.
    pub fn map(&self, z: &Matrix, c: &Matrix) -> Result<Matrix> {
        self.check(z.shape(), c.shape())?;
        self.mlp.forward(&z.hconcat(c)?)
    }

    fn check(&self, z: (usize, usize), c: (usize, usize)) -> Result<()> {
        let d = self.dim();
        if z.1 != d || c.1 != d || z.0 != c.0 {
            return Err(Error::shape("map_forward", format!("z {z:?} and c {c:?} for latent dim {d}")));
        }
        Ok(())
    }
}

/// Taped `w = MLP([z ‖ c̃])`.
pub fn map_forward(net: &MappingNet, vars: &MlpVars, z: Var, c: Var, tape: &mut Tape) -> Result<Var> {
    net.check(tape.value(z).shape(), tape.value(c).shape())?;
    let input = tape.concat_cols(z, c)?;
    Ok(net.mlp.forward_tape(vars, input, tape)?.output)
}

pub(crate) const CHECKPOINT_MAGIC: &[u8; 4] = b"NTCK";
pub(crate) const CHECKPOINT_VERSION: u32 = 1;

pub(crate) fn encode_latent(w: &mut Writer, table: &EmbeddingTable, net: &MappingNet) {
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(table.num_classes());
    w.len_u32(table.dim());
    w.f64(table.sigma);
    w.f64(table.alpha);
    for &n in &table.class_counts {
        w.u64(n);
    }
    w.f64s(table.means.data());
    w.mlp(&net.mlp);
}

pub(crate) fn decode_latent(r: &mut Reader<'_>) -> Result<(EmbeddingTable, MappingNet)> {
    r.expect(CHECKPOINT_MAGIC, "magic")?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let at = r.offset();
    let classes = r.len()?;
    let dim = r.len()?;
    let sigma = r.f64()?;
    let alpha = r.f64()?;
    let counts = (0..classes).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let means = Matrix::new(classes, dim, r.f64s(classes * dim)?)?;
    let table = EmbeddingTable::from_parts(means, counts, sigma, alpha).map_err(|e| r.error_at(at, e.to_string()))?;
    let net_at = r.offset();
    let net = MappingNet::from_mlp(r.mlp()?).map_err(|e| r.error_at(net_at, e.to_string()))?;
    if net.dim() != dim {
        return Err(r.error(format!("mapping net dim {} vs embedding dim {dim}", net.dim())));
    }
    Ok((table, net))
}

/// Writes an embedding table and mapping network as a checkpoint with no
/// extension sections.
pub fn save_latent(path: &Path, table: &EmbeddingTable, net: &MappingNet) -> Result<()> {
    let mut w = Writer::default();
    encode_latent(&mut w, table, net);
    w.u32(0);
    write_file(path, &w.buf)
}

/// Reads the latent part of any checkpoint, ignoring extension sections.
pub fn load_latent(path: &Path) -> Result<(EmbeddingTable, MappingNet)> {
    let bytes = read_file(path)?;
    decode_latent(&mut Reader::new(&bytes, path))
}
