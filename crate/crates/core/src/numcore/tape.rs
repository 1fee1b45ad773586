//! Reverse-mode automatic differentiation over 2-D matrices.
//!
//! A [`Tape`] records every primitive as a node holding its value. Nodes are
//! appended in evaluation order, so the index order is a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use std::collections::VecDeque;

use super::matrix::{gemm, gemm_into};
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Columns whose population std is below this are only mean-centered.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Clone, Debug)]
enum Op {
    Param,
    Constant,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// Adds a 1 x n row to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    LeakyRelu(Var, f64),
    /// Elementwise product with constant per-entry slopes.
    FixedSlopes(Var, Matrix),
    Softplus(Var),
    ConcatCols(Var, Var),
    SliceCols {
        a: Var,
        start: usize,
        len: usize,
    },
    GatherRows {
        table: Var,
        index: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    ColumnSums(Var),
    StandardizeCols(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    frozen: Option<VecDeque<Matrix>>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `None` when the node does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zero-filled when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Column means, divisors and degenerate flags for standardization.
fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = x.rows() as f64;
    let means: Vec<f64> = x.column_sums().data().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((v, &xi), m) in var.iter_mut().zip(x.row(r)).zip(&means) {
            *v += (xi - m) * (xi - m);
        }
    }
    let stds: Vec<f64> = var.into_iter().map(|v| (v / n).sqrt()).collect();
    let degenerate: Vec<bool> = stds.iter().map(|&s| s < DEGENERATE_STD).collect();
    let divisors = stds.iter().zip(&degenerate).map(|(&s, &d)| if d { 1.0 } else { s }).collect();
    (means, divisors, degenerate)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Tape whose leaky ReLUs use the given slopes, in recording order,
    /// instead of the sign of their inputs. Recomputing a graph this way stays
    /// on one linear piece, so finite differences cannot straddle a kink.
    pub fn with_activation_pattern(pattern: Vec<Matrix>) -> Self {
        Tape { nodes: Vec::new(), frozen: Some(pattern.into()) }
    }

    /// Per-entry slopes applied by every leaky ReLU, in recording order.
    pub fn activation_pattern(&self) -> Vec<Matrix> {
        let val = |a: Var| &self.nodes[a.0].value;
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::LeakyRelu(a, slope) => Some(val(*a).map(|x| if x > 0.0 { 1.0 } else { *slope })),
                Op::FixedSlopes(_, f) => Some(f.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_node(Op::Param, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_node(Op::Constant, value, false)
    }

    fn push_node(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        self.check(&op)?;
        let value = self.eval(&op)?;
        let requires_grad = self.inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_node(op, value, requires_grad))
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match *op {
            Op::Param | Op::Constant => vec![],
            Op::MatMul { a, b, .. }
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddRow(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::LeakyRelu(a, _)
            | Op::FixedSlopes(a, _)
            | Op::Softplus(a)
            | Op::SliceCols { a, .. }
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::ColumnSums(a)
            | Op::StandardizeCols(a) => vec![a],
            Op::GatherRows { table, .. } => vec![table],
        }
    }

    fn check(&self, op: &Op) -> Result<()> {
        let shape = |v: Var| self.nodes[v.0].value.shape();
        let same = |name: &'static str, a: Var, b: Var| {
            if shape(a) != shape(b) {
                Err(Error::shape(name, format!("{:?} vs {:?}", shape(a), shape(b))))
            } else {
                Ok(())
            }
        };
        match *op {
            Op::MatMul { a, b, ta, tb } => {
                let (ar, ac) = shape(a);
                let (br, bc) = shape(b);
                let k1 = if ta { ar } else { ac };
                let k2 = if tb { bc } else { br };
                if k1 != k2 {
                    return Err(Error::shape("matmul", format!("inner dims {k1} vs {k2}")));
                }
            }
            Op::Add(a, b) => same("add", a, b)?,
            Op::Sub(a, b) => same("sub", a, b)?,
            Op::Mul(a, b) => same("mul", a, b)?,
            Op::Div(a, b) => same("div", a, b)?,
            Op::AddRow(a, row) => {
                if shape(row) != (1, shape(a).1) {
                    return Err(Error::shape("add_row", format!("row {:?} for matrix {:?}", shape(row), shape(a))));
                }
            }
            Op::ConcatCols(a, b) => {
                if shape(a).0 != shape(b).0 {
                    return Err(Error::shape("concat_cols", format!("{:?} vs {:?}", shape(a), shape(b))));
                }
            }
            Op::SliceCols { a, start, len } => {
                if start + len > shape(a).1 {
                    return Err(Error::shape(
                        "slice_cols",
                        format!("columns {start}..{} of {}", start + len, shape(a).1),
                    ));
                }
            }
            Op::GatherRows { table, ref index } => {
                let n = shape(table).0;
                if let Some(&bad) = index.iter().find(|&&i| i >= n) {
                    return Err(Error::Index { what: "gather_rows table", index: bad, len: n });
                }
            }
            Op::FixedSlopes(a, ref f) => {
                if shape(a) != f.shape() {
                    return Err(Error::shape(
                        "leaky_relu",
                        format!("pattern {:?} for input {:?}", f.shape(), shape(a)),
                    ));
                }
            }
            Op::StandardizeCols(a) if shape(a).0 < 2 => {
                return Err(Error::contract(
                    "standardize_batch",
                    format!("batch of {} rows; need at least 2", shape(a).0),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    fn eval(&self, op: &Op) -> Result<Matrix> {
        let val = |v: Var| &self.nodes[v.0].value;
        Ok(match *op {
            Op::Param | Op::Constant => unreachable!("leaves are not evaluated"),
            Op::MatMul { a, b, ta, tb } => gemm(val(a), ta, val(b), tb)?,
            Op::Add(a, b) => val(a).zip_map(val(b), |x, y| x + y),
            Op::Sub(a, b) => val(a).zip_map(val(b), |x, y| x - y),
            Op::Mul(a, b) => val(a).zip_map(val(b), |x, y| x * y),
            Op::Div(a, b) => val(a).zip_map(val(b), |x, y| x / y),
            Op::AddRow(a, row) => {
                let mut out = val(a).clone();
                let row = val(row).data();
                for r in 0..out.rows() {
                    for (o, b) in out.row_mut(r).iter_mut().zip(row) {
                        *o += b;
                    }
                }
                out
            }
            Op::Scale(a, s) => val(a).scale(s),
            Op::AddScalar(a, s) => val(a).map(|x| x + s),
            Op::LeakyRelu(a, slope) => val(a).map(|x| if x > 0.0 { x } else { slope * x }),
            Op::FixedSlopes(a, ref f) => val(a).zip_map(f, |x, s| x * s),
            Op::Softplus(a) => val(a).map(softplus),
            Op::ConcatCols(a, b) => val(a).hconcat(val(b))?,
            Op::SliceCols { a, start, len } => val(a).columns(start, len),
            Op::GatherRows { table, ref index } => val(table).select_rows(index),
            Op::Sum(a) => Matrix::scalar(val(a).sum()),
            Op::Mean(a) => Matrix::scalar(val(a).sum() / val(a).len() as f64),
            Op::ColumnSums(a) => val(a).column_sums(),
            Op::StandardizeCols(a) => {
                let x = val(a);
                let (means, divisors, _) = column_stats(x);
                Matrix::from_fn(x.rows(), x.cols(), |r, c| (x.get(r, c) - means[c]) / divisors[c])
            }
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul { a, b, ta: false, tb: false })
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul { a, b, ta: true, tb: false })
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul { a, b, ta: false, tb: true })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Div(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.push(Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.push(Op::AddScalar(a, s))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        match self.frozen.as_mut() {
            None => self.push(Op::LeakyRelu(a, slope)),
            Some(pattern) => {
                let slopes =
                    pattern.pop_front().ok_or_else(|| Error::shape("leaky_relu", "activation pattern exhausted"))?;
                self.push(Op::FixedSlopes(a, slopes))
            }
        }
    }

    /// Numerically stable `log(1 + exp(x))`.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Softplus(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::SliceCols { a, start, len })
    }

    /// Row lookup; the backward pass scatter-adds into the table.
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Result<Var> {
        self.push(Op::GatherRows { table, index: index.to_vec() })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Mean(a))
    }

    /// 1 x n row of column sums.
    pub fn column_sums(&mut self, a: Var) -> Result<Var> {
        self.push(Op::ColumnSums(a))
    }

    /// Per-column centering and scaling by the population std. Columns with
    /// std below [`DEGENERATE_STD`] are only centered.
    pub fn standardize_cols(&mut self, a: Var) -> Result<Var> {
        self.push(Op::StandardizeCols(a))
    }

    /// Recomputes every non-leaf node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut scratch = Tape { nodes: Vec::with_capacity(self.nodes.len()), frozen: None };
        for node in &self.nodes {
            let value = match node.op {
                Op::Param | Op::Constant => node.value.clone(),
                ref op => scratch.eval(op)?,
            };
            scratch.nodes.push(Node { op: node.op.clone(), value, requires_grad: node.requires_grad });
        }
        Ok(scratch.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = self.nodes[output.0].value.shape();
        if out_shape != (1, 1) {
            return Err(Error::contract("backward", format!("output must be a 1x1 scalar, got {out_shape:?}")));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// `grads[v] += op(x) · op(y)` without an intermediate allocation when possible.
    fn accumulate_product(&self, grads: &mut [Option<Matrix>], v: Var, x: &Matrix, tx: bool, y: &Matrix, ty: bool) {
        match &mut grads[v.0] {
            Some(acc) => gemm_into(x, tx, y, ty, 1.0, acc),
            slot @ None => {
                let (r, c) = self.nodes[v.0].value.shape();
                let mut m = Matrix::zeros(r, c);
                gemm_into(x, tx, y, ty, 0.0, &mut m);
                *slot = Some(m);
            }
        }
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match self.nodes[i].op {
            Op::Param | Op::Constant => {}
            Op::MatMul { a, b, ta, tb } => {
                // out = op(A) op(B)
                if self.wants(a) {
                    // d op(A) = g op(B)ᵀ ; if ta, dA = (g op(B)ᵀ)ᵀ = op(B) gᵀ
                    if ta {
                        self.accumulate_product(grads, a, val(b), tb, g, true);
                    } else {
                        self.accumulate_product(grads, a, g, false, val(b), !tb);
                    }
                }
                if self.wants(b) {
                    // d op(B) = op(A)ᵀ g ; if tb, dB = gᵀ op(A)
                    if tb {
                        self.accumulate_product(grads, b, g, true, val(a), ta);
                    } else {
                        self.accumulate_product(grads, b, val(a), !ta, g, false);
                    }
                }
            }
            Op::Add(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.clone());
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.clone());
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.zip_map(val(b), |x, y| x * y));
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.zip_map(val(a), |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.zip_map(val(b), |x, y| x / y));
                }
                if self.wants(b) {
                    let out = &self.nodes[i].value;
                    let gb =
                        Matrix::from_fn(g.rows(), g.cols(), |r, c| -g.get(r, c) * out.get(r, c) / val(b).get(r, c));
                    self.accumulate(grads, b, gb);
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.clone());
                }
                if self.wants(row) {
                    self.accumulate(grads, row, g.column_sums());
                }
            }
            Op::Scale(a, s) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.scale(s));
                }
            }
            Op::AddScalar(a, _) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.clone());
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.wants(a) {
                    let ga = g.zip_map(val(a), |gv, x| if x > 0.0 { gv } else { slope * gv });
                    self.accumulate(grads, a, ga);
                }
            }
            Op::FixedSlopes(a, ref f) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.zip_map(f, |gv, s| gv * s));
                }
            }
            Op::Softplus(a) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.zip_map(val(a), |gv, x| gv * sigmoid(x)));
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                if self.wants(a) {
                    self.accumulate(grads, a, g.columns(0, ca));
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.columns(ca, val(b).cols()));
                }
            }
            Op::SliceCols { a, start, len } => {
                if self.wants(a) {
                    let (r, c) = val(a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for row in 0..r {
                        ga.row_mut(row)[start..start + len].copy_from_slice(g.row(row));
                    }
                    self.accumulate(grads, a, ga);
                }
            }
            Op::GatherRows { table, ref index } => {
                if self.wants(table) {
                    let (r, c) = val(table).shape();
                    let mut gt = Matrix::zeros(r, c);
                    for (k, &src) in index.iter().enumerate() {
                        for (o, v) in gt.row_mut(src).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, table, gt);
                }
            }
            Op::Sum(a) => {
                if self.wants(a) {
                    let (r, c) = val(a).shape();
                    self.accumulate(grads, a, Matrix::filled(r, c, g.item()));
                }
            }
            Op::Mean(a) => {
                if self.wants(a) {
                    let (r, c) = val(a).shape();
                    self.accumulate(grads, a, Matrix::filled(r, c, g.item() / (r * c) as f64));
                }
            }
            Op::ColumnSums(a) => {
                if self.wants(a) {
                    let (r, c) = val(a).shape();
                    self.accumulate(grads, a, Matrix::from_fn(r, c, |_, j| g.get(0, j)));
                }
            }
            Op::StandardizeCols(a) => {
                if self.wants(a) {
                    let x = val(a);
                    let y = &self.nodes[i].value;
                    let (_, divisors, degenerate) = column_stats(x);
                    let n = x.rows() as f64;
                    let (rows, cols) = x.shape();
                    let mut mean_g = vec![0.0; cols];
                    let mut mean_gy = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            mean_g[c] += g.get(r, c) / n;
                            mean_gy[c] += g.get(r, c) * y.get(r, c) / n;
                        }
                    }
                    let ga = Matrix::from_fn(rows, cols, |r, c| {
                        let proj = if degenerate[c] { 0.0 } else { y.get(r, c) * mean_gy[c] };
                        (g.get(r, c) - mean_g[c] - proj) / divisors[c]
                    });
                    self.accumulate(grads, a, ga);
                }
            }
        }
    }
}
