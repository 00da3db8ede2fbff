//! Tensor-level reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Tape::gradients`] on a scalar result walks the record backwards and
//! returns the gradient of that scalar with respect to every recorded node.
//! Nodes created with [`Tape::constant`] (and everything computed only from
//! constants) are skipped during the backward sweep.
//!
//! The op set is closed: only the methods on [`Var`] can be recorded, so an
//! unsupported operation is rejected when the program is compiled. Shape
//! mismatches are reported as [`Error::Shape`] naming the op.

use std::cell::{Ref, RefCell};

use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{Error, Result};

/// Denominators smaller than this in magnitude are rejected by [`Var::div`].
pub const DIV_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Softplus(usize),
    Abs(usize),
    Square(usize),
    Sqrt(usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    MinConst(usize, f64),
    ConcatCols(usize, usize),
    Reshape(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded recording context. Never shared across threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a differentiable input.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that gradients never flow into.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Gradient of a scalar (single-element) output.
    pub fn gradients(&self, output: Var<'_>) -> Result<Gradients> {
        let shape = output.shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::shape("gradients", &shape, &[]));
        }
        self.gradients_with_seed(output, Tensor::full(&shape, 1.0))
    }

    /// Vector-Jacobian product: backpropagates `seed` (shaped like `output`).
    pub fn gradients_with_seed(&self, output: Var<'_>, seed: Tensor) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out_shape = nodes[output.id].value.shape();
        if seed.shape() != out_shape {
            return Err(Error::shape("gradients_with_seed", out_shape, seed.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.id + 1];
        if !nodes[output.id].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[output.id] = Some(seed);

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            backward_node(&nodes, node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], id: usize, shape: &[usize]) -> &'g mut Tensor {
    grads[id].get_or_insert_with(|| Tensor::zeros(shape))
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, f: impl Fn(usize) -> f64) {
    if !nodes[id].requires_grad {
        return;
    }
    let shape = nodes[id].value.shape();
    let dst = slot(grads, id, shape);
    for (i, d) in dst.data_mut().iter_mut().enumerate() {
        *d += f(i);
    }
}

fn backward_node(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let gd = g.data();
    let y = node.value.data();
    match node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let (m, k) = av.dims2("matmul")?;
            let (_, n) = bv.dims2("matmul")?;
            if nodes[a].requires_grad {
                // dA = dC · Bᵀ
                let dst = slot(grads, a, &[m, k]);
                gemm(
                    m,
                    n,
                    k,
                    MatRef::row_major(gd, n),
                    MatRef::transposed(bv.data(), n),
                    dst.data_mut(),
                    1.0,
                );
            }
            if nodes[b].requires_grad {
                // dB = Aᵀ · dC
                let dst = slot(grads, b, &[k, n]);
                gemm(
                    k,
                    m,
                    n,
                    MatRef::transposed(av.data(), k),
                    MatRef::row_major(gd, n),
                    dst.data_mut(),
                    1.0,
                );
            }
        }
        Op::Add(a, b) => {
            accumulate(nodes, grads, a, |i| gd[i]);
            accumulate(nodes, grads, b, |i| gd[i]);
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, a, |i| gd[i]);
            accumulate(nodes, grads, b, |i| -gd[i]);
        }
        Op::Mul(a, b) => {
            let av = nodes[a].value.data();
            let bv = nodes[b].value.data();
            accumulate(nodes, grads, a, |i| gd[i] * bv[i]);
            accumulate(nodes, grads, b, |i| gd[i] * av[i]);
        }
        Op::Div(a, b) => {
            let av = nodes[a].value.data();
            let bv = nodes[b].value.data();
            accumulate(nodes, grads, a, |i| gd[i] / bv[i]);
            accumulate(nodes, grads, b, |i| -gd[i] * av[i] / (bv[i] * bv[i]));
        }
        Op::AddBias(a, b) => {
            accumulate(nodes, grads, a, |i| gd[i]);
            if nodes[b].requires_grad {
                let cols = nodes[b].value.len();
                let dst = slot(grads, b, nodes[b].value.shape()).data_mut();
                for row in gd.chunks_exact(cols) {
                    for (d, &v) in dst.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
        }
        Op::Scale(a, c) => accumulate(nodes, grads, a, |i| gd[i] * c),
        Op::AddScalar(a) | Op::Reshape(a) => accumulate(nodes, grads, a, |i| gd[i]),
        Op::Tanh(a) => accumulate(nodes, grads, a, |i| gd[i] * (1.0 - y[i] * y[i])),
        Op::Relu(a) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |i| if x[i] > 0.0 { gd[i] } else { 0.0 });
        }
        Op::LeakyRelu(a, slope) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |i| if x[i] > 0.0 { gd[i] } else { gd[i] * slope });
        }
        Op::Sigmoid(a) => accumulate(nodes, grads, a, |i| gd[i] * y[i] * (1.0 - y[i])),
        Op::Softplus(a) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |i| gd[i] * sigmoid(x[i]));
        }
        Op::Abs(a) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |i| {
                if x[i] > 0.0 {
                    gd[i]
                } else if x[i] < 0.0 {
                    -gd[i]
                } else {
                    0.0
                }
            });
        }
        Op::Square(a) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |i| 2.0 * x[i] * gd[i]);
        }
        Op::Sqrt(a) => {
            // zero subgradient at the origin
            accumulate(nodes, grads, a, |i| if y[i] > 0.0 { gd[i] / (2.0 * y[i]) } else { 0.0 });
        }
        Op::Sum(a) => accumulate(nodes, grads, a, |_| gd[0]),
        Op::Mean(a) => {
            let n = nodes[a].value.len() as f64;
            accumulate(nodes, grads, a, |_| gd[0] / n);
        }
        Op::SumRows(a) => {
            let cols = nodes[a].value.cols();
            accumulate(nodes, grads, a, |i| gd[i / cols]);
        }
        Op::MinConst(a, c) => {
            let x = nodes[a].value.data();
            accumulate(nodes, grads, a, |i| if x[i] < c { gd[i] } else { 0.0 });
        }
        Op::ConcatCols(a, b) => {
            let ca = nodes[a].value.cols();
            let cb = nodes[b].value.cols();
            let w = ca + cb;
            accumulate(nodes, grads, a, |i| gd[(i / ca) * w + i % ca]);
            accumulate(nodes, grads, b, |i| gd[(i / cb) * w + ca + i % cb]);
        }
    }
    Ok(())
}

/// `tanh` through a single `exp`; libm's version goes through `expm1` and
/// dominated the training profile. Small arguments keep the exact routine.
pub(crate) fn tanh(x: f64) -> f64 {
    if x.abs() < 0.25 {
        return x.tanh();
    }
    let e = (2.0 * x).exp();
    1.0 - 2.0 / (e + 1.0)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Gradients produced by one backward sweep, indexed by recorded node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros if nothing flowed into it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id).clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.value(self.id))
    }

    pub fn item(&self) -> f64 {
        self.tape.value(self.id).item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape().to_vec()
    }

    fn same_tape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::InvalidTensor(format!("{op}: operands live on different tapes")))
        }
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let out = self.tape.value(self.id).map(f);
        self.tape.push(out, op, self.tape.requires_grad(self.id))
    }

    fn binary(&self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.same_tape(&other, name)?;
        let out = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            a.zip_map(&b, name, f)?
        };
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        Ok(self.tape.push(out, op, rg))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other, "matmul")?;
        let out = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            a.matmul(&b)?
        };
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id), rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Elementwise division; any denominator below [`DIV_GUARD`] is an error.
    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        if let Some(&v) = self
            .tape
            .value(other.id)
            .data()
            .iter()
            .find(|v| v.abs() < DIV_GUARD)
        {
            return Err(Error::DivisionByZero { op: "div", value: v });
        }
        self.binary(other, "div", Op::Div(self.id, other.id), |a, b| a / b)
    }

    /// `[n, k] + [k]`, adding the bias vector to every row.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&bias, "add_bias")?;
        let out = {
            let x = self.tape.value(self.id);
            let b = self.tape.value(bias.id);
            let (_, k) = x.dims2("add_bias")?;
            if b.len() != k || b.rank() > 2 || (b.rank() == 2 && b.rows() != 1) {
                return Err(Error::shape("add_bias", x.shape(), b.shape()));
            }
            let mut out = x.clone();
            for row in out.data_mut().chunks_exact_mut(k) {
                for (o, &bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            out
        };
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(bias.id);
        Ok(self.tape.push(out, Op::AddBias(self.id, bias.id), rg))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |v| v * c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |v| v + c)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), tanh)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(Op::LeakyRelu(self.id, slope), |v| if v > 0.0 { v } else { v * slope })
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), |v| v * v)
    }

    /// Square root; negative inputs are clamped to zero and the gradient at zero is zero.
    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), |v| v.max(0.0).sqrt())
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.tape.value(self.id).sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), self.tape.requires_grad(self.id))
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let (s, n) = {
            let v = self.tape.value(self.id);
            (v.sum(), v.len())
        };
        if n == 0 {
            return Err(Error::EmptyBatch("mean"));
        }
        Ok(self
            .tape
            .push(Tensor::scalar(s / n as f64), Op::Mean(self.id), self.tape.requires_grad(self.id)))
    }

    /// Sums each row of a `[n, k]` tensor into a length-`n` vector.
    pub fn sum_rows(self) -> Result<Var<'t>> {
        let out = {
            let v = self.tape.value(self.id);
            let (n, k) = v.dims2("sum_rows")?;
            let data = if k == 0 {
                vec![0.0; n]
            } else {
                v.data().chunks_exact(k).map(|r| r.iter().sum()).collect()
            };
            Tensor::vector(data)
        };
        Ok(self.tape.push(out, Op::SumRows(self.id), self.tape.requires_grad(self.id)))
    }

    /// `min(x, c)` elementwise; the gradient passes only where `x < c` strictly.
    pub fn min_const(self, c: f64) -> Var<'t> {
        self.unary(Op::MinConst(self.id, c), |v| v.min(c))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other, "concat_cols")?;
        let out = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            a.concat_cols(&b)?
        };
        let rg = self.tape.requires_grad(self.id) || self.tape.requires_grad(other.id);
        Ok(self.tape.push(out, Op::ConcatCols(self.id, other.id), rg))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.tape.value(self.id).clone().reshape(shape.to_vec())?;
        Ok(self.tape.push(out, Op::Reshape(self.id), self.tape.requires_grad(self.id)))
    }
}
