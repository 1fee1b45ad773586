//! Fully connected networks with leaky-ReLU hidden activations.

use super::{Matrix, Rng, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

/// Affine layers with a leaky ReLU after every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    slope: f64,
}

/// Tape handles for the parameters of one [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

impl MlpVars {
    pub fn all(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Output of a taped forward pass, with the pre-activation of every hidden layer.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub output: Var,
    pub pre_activations: Vec<Var>,
}

impl Mlp {
    /// He-style Gaussian initialization, zero biases.
    pub fn new(widths: &[usize], slope: f64, rng: &mut Rng) -> Result<Self> {
        Self::check_widths(widths)?;
        let gain = (2.0 / (1.0 + slope * slope)).sqrt();
        let layers = widths
            .windows(2)
            .map(|w| {
                let std = gain / (w[0] as f64).sqrt();
                Linear { weight: Matrix::from_fn(w[0], w[1], |_, _| std * rng.normal()), bias: Matrix::zeros(1, w[1]) }
            })
            .collect();
        Ok(Mlp { layers, slope })
    }

    pub fn from_layers(layers: Vec<Linear>, slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("Mlp", "no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(Error::shape("Mlp", format!("layer {i} bias {:?}", l.bias.shape())));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::shape("Mlp", format!("layer {i} input width")));
            }
        }
        Ok(Mlp { layers, slope })
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::shape("Mlp", format!("invalid widths {widths:?}")));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.rows()];
        w.extend(self.layers.iter().map(|l| l.weight.cols()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Untaped forward pass.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(
                "Mlp::forward",
                format!("input width {} for network expecting {}", x.cols(), self.input_width()),
            ));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.matmul(&layer.weight)?;
            let bias = layer.bias.data();
            for r in 0..h.rows() {
                for (v, b) in h.row_mut(r).iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if i < last {
                let slope = self.slope;
                for v in h.data_mut() {
                    if *v <= 0.0 {
                        *v *= slope;
                    }
                }
            }
        }
        Ok(h)
    }

    /// Places the parameters on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let mut leaf = |m: &Matrix| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) };
        MlpVars { layers: self.layers.iter().map(|l| (leaf(&l.weight), leaf(&l.bias))).collect() }
    }

    pub fn forward_tape(&self, vars: &MlpVars, x: Var, tape: &mut Tape) -> Result<MlpTrace> {
        if tape.value(x).cols() != self.input_width() {
            return Err(Error::shape(
                "Mlp::forward_tape",
                format!("input width {} for network expecting {}", tape.value(x).cols(), self.input_width()),
            ));
        }
        let last = vars.layers.len() - 1;
        let mut h = x;
        let mut pre_activations = Vec::with_capacity(last);
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            let lin = tape.matmul(h, w)?;
            let pre = tape.add_row(lin, b)?;
            if i < last {
                pre_activations.push(pre);
                h = tape.leaky_relu(pre, self.slope)?;
            } else {
                h = pre;
            }
        }
        Ok(MlpTrace { output: h, pre_activations })
    }
}
