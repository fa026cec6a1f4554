//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A `Tape` records every operation as a node holding its value. Nodes are
//! appended in evaluation order, so walking the list backwards is a valid
//! reverse topological order.

use crate::activations::{softmax, Activation, SoftmaxAxis};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Scale(usize, f64),
    /// 1×1 node times a matrix node.
    ScalarMul(usize, usize),
    Activation(usize, Activation),
    Sigmoid(usize),
    Softmax(usize, SoftmaxAxis),
    LogSoftmax(usize, SoftmaxAxis),
    Transpose(usize),
    Sum(usize),
    SumSquares(usize),
    /// Mean of the listed `(row, col)` entries.
    PickMean(usize, Vec<(usize, usize)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn ng(&self, a: usize) -> bool {
        self.nodes[a].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(value, Op::MatMul(a.0, b.0), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(value, Op::Add(a.0, b.0), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(value, Op::Sub(a.0, b.0), ng))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(value, Op::Hadamard(a.0, b.0), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let ng = self.ng(a.0);
        self.push(value, Op::Scale(a.0, c), ng)
    }

    /// `s · a` for a 1×1 node `s`.
    pub fn scalar_mul(&mut self, s: Var, a: Var) -> Result<Var> {
        let c = self
            .value(s)
            .as_scalar()
            .ok_or_else(|| Error::shape("scalar_mul", self.shape(s), (1, 1)))?;
        let value = self.value(a).scale(c);
        let ng = self.ng(s.0) || self.ng(a.0);
        Ok(self.push(value, Op::ScalarMul(s.0, a.0), ng))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        let value = act.apply(self.value(a));
        let ng = self.ng(a.0);
        self.push(value, Op::Activation(a.0, act), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.ng(a.0);
        self.push(value, Op::Sigmoid(a.0), ng)
    }

    pub fn softmax(&mut self, a: Var, axis: SoftmaxAxis) -> Var {
        let value = softmax(self.value(a), axis);
        let ng = self.ng(a.0);
        self.push(value, Op::Softmax(a.0, axis), ng)
    }

    pub fn log_softmax(&mut self, a: Var, axis: SoftmaxAxis) -> Var {
        let x = self.value(a);
        let value = match axis {
            SoftmaxAxis::PerColumn => log_softmax_columns(x),
            SoftmaxAxis::PerRow => log_softmax_columns(&x.transpose()).transpose(),
        };
        let ng = self.ng(a.0);
        self.push(value, Op::LogSoftmax(a.0, axis), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let ng = self.ng(a.0);
        self.push(value, Op::Transpose(a.0), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let ng = self.ng(a.0);
        self.push(value, Op::Sum(a.0), ng)
    }

    /// `‖a‖²_F` as a 1×1 node.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).frobenius_norm_sq());
        let ng = self.ng(a.0);
        self.push(value, Op::SumSquares(a.0), ng)
    }

    /// Mean of selected entries, as a 1×1 node.
    pub fn pick_mean(&mut self, a: Var, picks: Vec<(usize, usize)>) -> Result<Var> {
        if picks.is_empty() {
            return Err(Error::Input("pick_mean needs at least one entry".into()));
        }
        let x = self.value(a);
        let (r, c) = x.shape();
        let mut total = 0.0;
        for &(i, j) in &picks {
            if i >= r || j >= c {
                return Err(Error::Index(format!("entry ({i}, {j}) outside {r}x{c}")));
            }
            total += x[(i, j)];
        }
        let value = Matrix::scalar(total / picks.len() as f64);
        let ng = self.ng(a.0);
        Ok(self.push(value, Op::PickMean(a.0, picks), ng))
    }

    /// Smallest distance of any activation input to that activation's kink.
    /// Finite-difference checks are unreliable when this is tiny.
    pub fn min_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Activation(a, act) = node.op {
                if let Some(k) = act.kink() {
                    for &x in self.nodes[a].value.data() {
                        best = best.min((x - k).abs());
                    }
                }
            }
        }
        best
    }

    /// Accumulates `∂loss/∂node` for every node that depends on a parameter.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::shape("backward", shape, (1, 1)));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            let contributions = self.local_grads(idx, &g)?;
            for (parent, pg) in contributions {
                if !self.nodes[parent].needs_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn local_grads(&self, idx: usize, g: &Matrix) -> Result<Vec<(usize, Matrix)>> {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            &Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if self.ng(a) {
                    v.push((a, g.matmul(&val(b).transpose())?));
                }
                if self.ng(b) {
                    v.push((b, val(a).transpose().matmul(g)?));
                }
                v
            }
            &Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            &Op::Sub(a, b) => vec![(a, g.clone()), (b, g.scale(-1.0))],
            &Op::Hadamard(a, b) => vec![(a, g.hadamard(val(b))?), (b, g.hadamard(val(a))?)],
            &Op::Scale(a, c) => vec![(a, g.scale(c))],
            &Op::ScalarMul(s, a) => {
                let c = val(s).data()[0];
                vec![(s, Matrix::scalar(g.frobenius_inner(val(a))?)), (a, g.scale(c))]
            }
            &Op::Activation(a, act) => {
                vec![(a, g.zip_map(val(a), "activation", |gi, x| gi * act.derivative(x))?)]
            }
            &Op::Sigmoid(a) => {
                vec![(a, g.zip_map(&node.value, "sigmoid", |gi, y| gi * y * (1.0 - y))?)]
            }
            &Op::Softmax(a, axis) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                let (outer, inner) = match axis {
                    SoftmaxAxis::PerColumn => (y.cols(), y.rows()),
                    SoftmaxAxis::PerRow => (y.rows(), y.cols()),
                };
                for o in 0..outer {
                    let at = |k: usize| match axis {
                        SoftmaxAxis::PerColumn => (k, o),
                        SoftmaxAxis::PerRow => (o, k),
                    };
                    let s: f64 = (0..inner).map(|k| g[at(k)] * y[at(k)]).sum();
                    for k in 0..inner {
                        d[at(k)] = y[at(k)] * (g[at(k)] - s);
                    }
                }
                vec![(a, d)]
            }
            &Op::LogSoftmax(a, axis) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                let (outer, inner) = match axis {
                    SoftmaxAxis::PerColumn => (y.cols(), y.rows()),
                    SoftmaxAxis::PerRow => (y.rows(), y.cols()),
                };
                for o in 0..outer {
                    let at = |k: usize| match axis {
                        SoftmaxAxis::PerColumn => (k, o),
                        SoftmaxAxis::PerRow => (o, k),
                    };
                    let s: f64 = (0..inner).map(|k| g[at(k)]).sum();
                    for k in 0..inner {
                        d[at(k)] = g[at(k)] - y[at(k)].exp() * s;
                    }
                }
                vec![(a, d)]
            }
            &Op::Transpose(a) => vec![(a, g.transpose())],
            &Op::Sum(a) => {
                let (r, c) = val(a).shape();
                vec![(a, Matrix::filled(r, c, g.data()[0]))]
            }
            &Op::SumSquares(a) => vec![(a, val(a).scale(2.0 * g.data()[0]))],
            Op::PickMean(a, picks) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                let w = g.data()[0] / picks.len() as f64;
                for &(i, j) in picks {
                    d[(i, j)] += w;
                }
                vec![(*a, d)]
            }
        };
        Ok(out)
    }

    /// Gradient from the last `backward`; zeros for nodes that received none.
    pub fn grad(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shape(v);
                Matrix::zeros(r, c)
            }
        }
    }
}

fn log_softmax_columns(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for j in 0..x.cols() {
        let m = (0..x.rows()).fold(f64::NEG_INFINITY, |a, i| a.max(x[(i, j)]));
        let lse = m + (0..x.rows()).map(|i| (x[(i, j)] - m).exp()).sum::<f64>().ln();
        for i in 0..x.rows() {
            out[(i, j)] = x[(i, j)] - lse;
        }
    }
    out
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.data().len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = f(&probe);
        probe.data_mut()[k] = orig - h;
        let down = f(&probe);
        probe.data_mut()[k] = orig;
        grad.data_mut()[k] = (up - down) / (2.0 * h);
    }
    grad
}
