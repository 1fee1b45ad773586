//! Dense linear algebra, seeded sampling, reverse-mode gradients and Adam.

mod adam;
mod gradcheck;
mod linalg;
mod matrix;
mod nn;
mod rng;
mod tape;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::{grad_check, relative_error};
pub use linalg::{matrix_sqrt_psd, symmetric_eigen, trace_sqrt_psd};
pub use matrix::Matrix;
pub use nn::{Linear, Mlp, MlpTrace, MlpVars};
pub use rng::{gaussian_sample, Rng};
pub use tape::{Gradients, Tape, Var, DEGENERATE_STD};
