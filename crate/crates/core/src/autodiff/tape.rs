use std::ops::Deref;

use super::tensor::{gemm, Real, Tensor};
use crate::error::{contract, Error, Result};

/// Exponent inputs are clamped here before `exp` so density heads cannot
/// overflow.
pub const EXP_CLAMP: f64 = 15.0;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softplus,
    /// `exp(min(x, 15))`.
    Exp,
}

impl Activation {
    #[inline]
    pub fn apply<S: Real>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => x.max(S::zero()) + (-x.abs()).exp().ln_1p(),
            Activation::Exp => x.min(S::of(EXP_CLAMP)).exp(),
        }
    }

    /// Derivative at input `x` given the forward output `y`.
    #[inline]
    pub fn derivative<S: Real>(self, x: S, y: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => y * (S::one() - y),
            Activation::Softplus => sigmoid(x),
            Activation::Exp => {
                if x <= S::of(EXP_CLAMP) {
                    y
                } else {
                    S::zero()
                }
            }
        }
    }
}

#[inline]
fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Backward rule for operations defined outside this module (encodings,
/// compositing).
pub trait CustomOp<S: Real> {
    fn name(&self) -> &'static str;

    /// Returns one entry per input; `None` where `needs_grad` is false or the
    /// input receives no gradient.
    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        grad: &Tensor<S>,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor<S>>>>;
}

enum Value<'a, S> {
    Owned(Tensor<S>),
    Borrowed(&'a Tensor<S>),
}

impl<S> Deref for Value<'_, S> {
    type Target = Tensor<S>;

    fn deref(&self) -> &Tensor<S> {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op<'a, S: Real> {
    Leaf,
    MatMul,
    AddBias,
    Add,
    Mul,
    Activation(Activation),
    Concat,
    Clamp { lo: S, hi: S },
    MaskRows(Vec<bool>),
    Sum,
    Mse(Tensor<S>),
    Custom(Box<dyn CustomOp<S> + 'a>),
}

struct Node<'a, S: Real> {
    value: Value<'a, S>,
    inputs: Vec<Var>,
    op: Op<'a, S>,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations.
///
/// Parameters may be borrowed for the tape's lifetime so that a training step
/// never copies weight tables; the tape is dropped before the optimizer
/// mutates them.
pub struct Tape<'a, S: Real> {
    nodes: Vec<Node<'a, S>>,
}

impl<S: Real> Default for Tape<'_, S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, S: Real> Tape<'a, S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<'a, S>, inputs: Vec<Var>, op: Op<'a, S>) -> Var {
        let requires_grad = match op {
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            inputs,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Value<'a, S>, requires_grad: bool) -> Var {
        let v = self.push(value, Vec::new(), Op::Leaf);
        self.nodes[v.0].requires_grad = requires_grad;
        v
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.leaf(Value::Owned(t), false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor<S>) -> Var {
        self.leaf(Value::Borrowed(t), false)
    }

    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.leaf(Value::Owned(t), true)
    }

    pub fn param_ref(&mut self, t: &'a Tensor<S>) -> Var {
        self.leaf(Value::Borrowed(t), true)
    }

    /// Registers every tensor as a trainable leaf, preserving order.
    pub fn bind_params(&mut self, params: &'a [Tensor<S>]) -> Vec<Var> {
        params.iter().map(|p| self.param_ref(p)).collect()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    fn matrix_dims(&self, op: &'static str, a: Var, other: Var) -> Result<(usize, usize)> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(self.shape_err(op, a, other));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a, b)?;
        let (k2, n) = self.matrix_dims("matmul", b, a)?;
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![S::zero(); m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        Ok(self.push(
            Value::Owned(Tensor::from_parts(vec![m, n], out)),
            vec![a, b],
            Op::MatMul,
        ))
    }

    /// Adds a bias vector to every row of a matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("add_bias", x, bias)?;
        if self.value(bias).numel() != n {
            return Err(self.shape_err("add_bias", x, bias));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(n.max(1)) {
            for (o, &bb) in row.iter_mut().zip(b) {
                *o += bb;
            }
        }
        Ok(self.push(
            Value::Owned(Tensor::from_parts(vec![m, n], out)),
            vec![x, bias],
            Op::AddBias,
        ))
    }

    /// `x · W + b` with `W` stored `in × out`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(x, weight)?;
        self.add_bias(h, bias)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err(op, a, b));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Value::Owned(Tensor::from_parts(shape, out)), vec![a, b], Op::Add))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Value::Owned(Tensor::from_parts(shape, out)), vec![a, b], Op::Mul))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| kind.apply(v)).collect();
        let shape = t.shape().to_vec();
        self.push(
            Value::Owned(Tensor::from_parts(shape, out)),
            vec![x],
            Op::Activation(kind),
        )
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.matrix_dims("concat", a, b)?;
        let (m2, q) = self.matrix_dims("concat", b, a)?;
        if m != m2 {
            return Err(self.shape_err("concat", a, b));
        }
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            out.extend_from_slice(&ta[r * p..(r + 1) * p]);
            out.extend_from_slice(&tb[r * q..(r + 1) * q]);
        }
        Ok(self.push(
            Value::Owned(Tensor::from_parts(vec![m, p + q], out)),
            vec![a, b],
            Op::Concat,
        ))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: S, hi: S) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| v.max(lo).min(hi)).collect();
        let shape = t.shape().to_vec();
        self.push(
            Value::Owned(Tensor::from_parts(shape, out)),
            vec![x],
            Op::Clamp { lo, hi },
        )
    }

    /// Zeroes the rows whose `keep` flag is false.
    pub fn mask_rows(&mut self, x: Var, keep: Vec<bool>) -> Result<Var> {
        let t = self.value(x);
        if t.rows() != keep.len() || t.shape().len() != 2 {
            return Err(Error::Shape {
                op: "mask_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![keep.len()],
            });
        }
        let n = t.cols();
        let mut out = t.data().to_vec();
        for (row, &k) in out.chunks_exact_mut(n).zip(&keep) {
            if !k {
                row.fill(S::zero());
            }
        }
        let shape = t.shape().to_vec();
        Ok(self.push(
            Value::Owned(Tensor::from_parts(shape, out)),
            vec![x],
            Op::MaskRows(keep),
        ))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Value::Owned(Tensor::scalar(s)), vec![x], Op::Sum)
    }

    /// Mean squared difference between `pred` and a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: Tensor<S>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::Shape {
                op: "mse_loss",
                lhs: p.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let n = p.numel().max(1);
        let total: S = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let value = total / S::of(n as f64);
        Ok(self.push(
            Value::Owned(Tensor::scalar(value)),
            vec![pred],
            Op::Mse(target),
        ))
    }

    /// Records an externally computed operation.
    pub fn custom(
        &mut self,
        inputs: Vec<Var>,
        output: Tensor<S>,
        op: impl CustomOp<S> + 'a,
    ) -> Var {
        self.push(Value::Owned(output), inputs, Op::Custom(Box::new(op)))
    }

    /// Reverse pass from a scalar node. Each node is visited once, from the
    /// loss back toward the leaves.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if loss.0 >= self.nodes.len() {
            return Err(contract("loss node is not on this tape"));
        }
        if self.value(loss).numel() != 1 {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut leaf_grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), S::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Op::Leaf = node.op {
                leaf_grads[idx] = Some(g);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads = self.node_backward(node, &g, &needs)?;
            for ((input, gi), &need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                let (Some(gi), true) = (gi, need) else { continue };
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                            *a += *b;
                        }
                    }
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }

    fn node_backward(
        &self,
        node: &Node<'a, S>,
        g: &Tensor<S>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<S>>>> {
        let input = |i: usize| -> &Tensor<S> { self.value(node.inputs[i]) };
        let out = &*node.value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul => {
                let (a, b) = (input(0), input(1));
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                let da = needs[0].then(|| {
                    let mut da = vec![S::zero(); m * k];
                    gemm(m, n, k, g.data(), false, b.data(), true, &mut da, false);
                    Tensor::from_parts(vec![m, k], da)
                });
                let db = needs[1].then(|| {
                    let mut db = vec![S::zero(); k * n];
                    gemm(k, m, n, a.data(), true, g.data(), false, &mut db, false);
                    Tensor::from_parts(vec![k, n], db)
                });
                vec![da, db]
            }
            Op::AddBias => {
                let bias = input(1);
                let n = bias.numel();
                let db = needs[1].then(|| {
                    let mut db = vec![S::zero(); n];
                    for row in g.data().chunks_exact(n) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    Tensor::from_parts(bias.shape().to_vec(), db)
                });
                vec![needs[0].then(|| g.clone()), db]
            }
            Op::Add => vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())],
            Op::Mul => {
                let (a, b) = (input(0), input(1));
                let prod = |t: &Tensor<S>| {
                    Tensor::from_parts(
                        t.shape().to_vec(),
                        g.data().iter().zip(t.data()).map(|(&x, &y)| x * y).collect(),
                    )
                };
                vec![needs[0].then(|| prod(b)), needs[1].then(|| prod(a))]
            }
            Op::Activation(kind) => {
                let x = input(0);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(out.data())
                    .map(|((&gv, &xv), &yv)| gv * kind.derivative(xv, yv))
                    .collect();
                vec![Some(Tensor::from_parts(x.shape().to_vec(), d))]
            }
            Op::Concat => {
                let (a, b) = (input(0), input(1));
                let (m, p) = (a.shape()[0], a.shape()[1]);
                let q = b.shape()[1];
                let (mut da, mut db) = (Vec::with_capacity(m * p), Vec::with_capacity(m * q));
                for row in g.data().chunks_exact(p + q) {
                    da.extend_from_slice(&row[..p]);
                    db.extend_from_slice(&row[p..]);
                }
                vec![
                    needs[0].then(|| Tensor::from_parts(vec![m, p], da)),
                    needs[1].then(|| Tensor::from_parts(vec![m, q], db)),
                ]
            }
            Op::Clamp { lo, hi } => {
                let x = input(0);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv >= *lo && xv <= *hi { gv } else { S::zero() })
                    .collect();
                vec![Some(Tensor::from_parts(x.shape().to_vec(), d))]
            }
            Op::MaskRows(keep) => {
                let mut d = g.clone();
                let n = d.cols();
                for (row, &k) in d.data_mut().chunks_exact_mut(n).zip(keep) {
                    if !k {
                        row.fill(S::zero());
                    }
                }
                vec![Some(d)]
            }
            Op::Sum => {
                let x = input(0);
                vec![Some(Tensor::full(x.shape(), g.data()[0]))]
            }
            Op::Mse(target) => {
                let p = input(0);
                let scale = S::of(2.0) * g.data()[0] / S::of(p.numel().max(1) as f64);
                let d = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&a, &b)| scale * (a - b))
                    .collect();
                vec![Some(Tensor::from_parts(p.shape().to_vec(), d))]
            }
            Op::Custom(op) => {
                let inputs: Vec<&Tensor<S>> = node.inputs.iter().map(|v| self.value(*v)).collect();
                let grads = op.backward(&inputs, out, g, needs)?;
                if grads.len() != inputs.len() {
                    return Err(contract(format!(
                        "custom op {} returned {} gradients for {} inputs",
                        op.name(),
                        grads.len(),
                        inputs.len()
                    )));
                }
                grads
            }
        })
    }
}

/// Gradients of the loss with respect to leaf nodes.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for `vars` in order; leaves the loss never reached get zeros.
    pub fn wrt(&mut self, tape: &Tape<'_, S>, vars: &[Var]) -> Vec<Tensor<S>> {
        vars.iter()
            .map(|v| match self.grads.get_mut(v.0).and_then(|g| g.take()) {
                Some(g) => g,
                None => Tensor::zeros(tape.value(*v).shape()),
            })
            .collect()
    }
}
