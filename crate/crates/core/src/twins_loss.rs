//! Cross-correlation between twin latent batches and the redundancy-reduction
//! loss built on it.
//!
//! Given twin batches `W_A`, `W_B` (rows share `z`, differ in embedding noise),
//! the loss pulls matching latent dimensions together (diagonal of `C`) and
//! decorrelates different dimensions (off-diagonal of `C`, weighted by `γ`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Tape, Var};

/// How the diagonal of `C` is penalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InvarianceForm {
    /// `Σ_j (1 - C_jj²)`
    #[default]
    Paper,
    /// `Σ_j (1 - C_jj)²`
    Barlow,
}

/// How twin batches are normalized before correlating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Center and scale each dimension to unit population std over the batch,
    /// then `C = Ŵ_Aᵀ Ŵ_B / BS`.
    #[default]
    Standardize,
    /// `C_jk = Σ_i a_ij b_ik / (Σ_i a_ij² · Σ_i b_ik²)` on the raw latents.
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinsLossConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub invariance_form: InvarianceForm,
    pub normalization: Normalization,
}

impl Default for TwinsLossConfig {
    fn default() -> Self {
        Self::SMALL_DATASET
    }
}

impl TwinsLossConfig {
    /// `λ = 0.01, γ = 0.05`, used for few-class long-tailed data.
    pub const SMALL_DATASET: TwinsLossConfig = TwinsLossConfig {
        lambda: 0.01,
        gamma: 0.05,
        invariance_form: InvarianceForm::Paper,
        normalization: Normalization::Standardize,
    };

    /// `λ = 0.001, γ = 0.005`, used for many-class data.
    pub const LARGE_DATASET: TwinsLossConfig = TwinsLossConfig {
        lambda: 0.001,
        gamma: 0.005,
        invariance_form: InvarianceForm::Paper,
        normalization: Normalization::Standardize,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::param("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// The `d x d` cross-correlation matrix, as a node on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CrossCorr {
    pub var: Var,
}

impl CrossCorr {
    pub fn value<'t>(&self, tape: &'t Tape) -> &'t Matrix {
        tape.value(self.var)
    }
}

pub fn standardize_batch(w: Var, tape: &mut Tape) -> Result<Var> {
    tape.standardize_cols(w)
}

/// `C_jk = (1/BS) Σ_i Ŵ_A[i,j] Ŵ_B[i,k]` for standardized inputs.
pub fn cross_correlation(a: Var, b: Var, tape: &mut Tape) -> Result<CrossCorr> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::shape("cross_correlation", format!("{sa:?} vs {sb:?}")));
    }
    let prod = tape.matmul_tn(a, b)?;
    Ok(CrossCorr { var: tape.scale(prod, 1.0 / sa.0 as f64)? })
}

/// Cross-correlation with the sum-of-squares denominator applied to raw latents.
pub fn raw_cross_correlation(a: Var, b: Var, tape: &mut Tape) -> Result<CrossCorr> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::shape("cross_correlation", format!("{sa:?} vs {sb:?}")));
    }
    let num = tape.matmul_tn(a, b)?;
    let a2 = tape.mul(a, a)?;
    let b2 = tape.mul(b, b)?;
    let na = tape.column_sums(a2)?;
    let nb = tape.column_sums(b2)?;
    let den = tape.matmul_tn(na, nb)?;
    Ok(CrossCorr { var: tape.div(num, den)? })
}

/// Normalizes twin latents as configured and correlates them.
pub fn correlate(w_a: Var, w_b: Var, normalization: Normalization, tape: &mut Tape) -> Result<CrossCorr> {
    match normalization {
        Normalization::Standardize => {
            let a = standardize_batch(w_a, tape)?;
            let b = standardize_batch(w_b, tape)?;
            cross_correlation(a, b, tape)
        }
        Normalization::Raw => raw_cross_correlation(w_a, w_b, tape),
    }
}

/// Invariance term on the diagonal plus `γ` times the off-diagonal sum of squares.
pub fn noisy_twins_loss(c: CrossCorr, cfg: &TwinsLossConfig, tape: &mut Tape) -> Result<Var> {
    let (rows, cols) = tape.value(c.var).shape();
    if rows != cols {
        return Err(Error::shape("noisy_twins_loss", format!("C is {rows}x{cols}")));
    }
    let d = rows;
    let sq = tape.mul(c.var, c.var)?;
    match cfg.invariance_form {
        InvarianceForm::Paper => {
            // d + Σ_jk M_jk C_jk² with M = γ(1 - I) - I
            let weights = Matrix::from_fn(d, d, |j, k| if j == k { -1.0 } else { cfg.gamma });
            let m = tape.constant(weights);
            let weighted = tape.mul(sq, m)?;
            let s = tape.sum(weighted)?;
            tape.add_scalar(s, d as f64)
        }
        InvarianceForm::Barlow => {
            let eye = tape.constant(Matrix::identity(d));
            let off = tape.constant(Matrix::from_fn(d, d, |j, k| if j == k { 0.0 } else { cfg.gamma }));
            let gap = tape.sub(eye, c.var)?;
            let diag_gap = tape.mul(gap, eye)?;
            let diag_sq = tape.mul(diag_gap, diag_gap)?;
            let inv = tape.sum(diag_sq)?;
            let weighted = tape.mul(sq, off)?;
            let red = tape.sum(weighted)?;
            tape.add(inv, red)
        }
    }
}

/// `L_G + λ L_NT`.
pub fn regularized_generator_loss(l_g: Var, l_nt: Var, lambda: f64, tape: &mut Tape) -> Result<Var> {
    let scaled = tape.scale(l_nt, lambda)?;
    tape.add(l_g, scaled)
}
