//! Reverse-mode automatic differentiation on a flat operation tape.
//!
//! A [`Graph`] records every forward operation as a node; [`Graph::backward`]
//! walks the tape in reverse and pushes adjoints to each node's inputs.
//! Public tensors carry `f32` storage (that is what checkpoints hold); the
//! tape itself computes in `f64` so that finite-difference checks and long
//! survival-integral sums stay well conditioned.

mod adam;
mod checkpoint;
mod gradcheck;
mod store;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta, CHECKPOINT_VERSION};
pub use gradcheck::grad_check;
pub use store::ParamStore;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expect} values but {got} were supplied")]
    LengthMismatch { shape: Vec<usize>, expect: usize, got: usize },
    #[error("{op}: shapes {lhs:?} and {rhs:?} are incompatible")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: axis {axis} is out of range for shape {shape:?}")]
    BadAxis { op: &'static str, axis: usize, shape: Vec<usize> },
    #[error("{op}: index {index} is out of range for axis length {len}")]
    BadIndex { op: &'static str, index: usize, len: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: expected a rank-2 operand, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op}: empty operand list")]
    Empty { op: &'static str },
    #[error("grad_check step size {eps} outside [1e-6, 1e-2]")]
    BadStep { eps: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Dense tensor of rank 1 or 2 with optional gradient storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f32>,
    requires_grad: bool,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    /// Builds a constant tensor; rejects shape/length mismatches and
    /// non-finite entries.
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let expect = numel(&shape);
        if expect != values.len() {
            return Err(TensorError::LengthMismatch { shape, expect, got: values.len() });
        }
        if shape.is_empty() || shape.len() > 2 {
            return Err(TensorError::Invalid(format!("tensor rank must be 1 or 2, got shape {shape:?}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "tensor literal" });
        }
        Ok(Tensor { shape, values, requires_grad: false, grad: None })
    }

    /// Builds a trainable tensor with zeroed gradient accumulator.
    pub fn param(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let mut t = Tensor::new(shape, values)?;
        t.requires_grad = true;
        t.grad = Some(vec![0.0; t.values.len()]);
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor { shape, values: vec![0.0; n], requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Adds `delta` into the gradient accumulator (no-op for constants).
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        if delta.len() != self.values.len() {
            return Err(TensorError::LengthMismatch {
                shape: self.shape.clone(),
                expect: self.values.len(),
                got: delta.len(),
            });
        }
        let grad = self.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += *d as f32;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Concat { axis: usize, parts: Vec<Var> },
    SliceRows { src: Var, indices: Vec<usize> },
    SliceCols { src: Var, indices: Vec<usize> },
    Softmax { src: Var, axis: usize },
    Softplus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Scale { src: Var, factor: f64 },
    AddScalar(Var),
    MaskedFill { src: Var, keep: Vec<bool> },
    RepeatRows { src: Var, copies: usize },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Forward tape. Nodes are appended in execution order; `backward` replays
/// the tape in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).values
    }

    /// Gradient of the most recent `backward` pass with respect to `v`.
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.node(v).grad
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op, needs_grad: bool) -> Result<Var> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name(&op) });
        }
        let n = values.len();
        self.nodes.push(Node { shape, values, grad: vec![0.0; n], op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Enters a tensor onto the tape. Gradients flow back to it iff the
    /// tensor was built with [`Tensor::param`].
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        let values = t.values.iter().map(|&v| v as f64).collect();
        self.push(t.shape.clone(), values, Op::Leaf, t.requires_grad)
    }

    /// Enters a non-trainable row vector `[1, n]`.
    pub fn constant_row(&mut self, values: &[f64]) -> Result<Var> {
        self.push(vec![1, values.len()], values.to_vec(), Op::Leaf, false)
    }

    /// Enters a non-trainable matrix in row-major order.
    pub fn constant_matrix(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        if rows * cols != values.len() {
            return Err(TensorError::LengthMismatch { shape: vec![rows, cols], expect: rows * cols, got: values.len() });
        }
        self.push(vec![rows, cols], values, Op::Leaf, false)
    }

    fn rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.node(v).shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(TensorError::NotMatrix { op, shape: self.node(v).shape.clone() }),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.rank2("matmul", a)?;
        let (br, bc) = self.rank2("matmul", b)?;
        if ac != br {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        let av = &self.node(a).values;
        let bv = &self.node(b).values;
        let mut out = vec![0.0f64; ar * bc];
        for i in 0..ar {
            let arow = &av[i * ac..(i + 1) * ac];
            let orow = &mut out[i * bc..(i + 1) * bc];
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * bc..(k + 1) * bc];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        self.push(vec![ar, bc], out, Op::Matmul(a, b), needs)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.rank2("transpose", a)?;
        let av = &self.node(a).values;
        let mut out = vec![0.0f64; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        let needs = self.node(a).needs_grad;
        self.push(vec![c, r], out, Op::Transpose(a), needs)
    }

    fn binary_elementwise(&mut self, op: &'static str, a: Var, b: Var) -> Result<(Vec<usize>, bool)> {
        if self.node(a).shape != self.node(b).shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        Ok((self.node(a).shape.clone(), self.node(a).needs_grad || self.node(b).needs_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, needs) = self.binary_elementwise("add", a, b)?;
        let out = self.node(a).values.iter().zip(&self.node(b).values).map(|(x, y)| x + y).collect();
        self.push(shape, out, Op::Add(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, needs) = self.binary_elementwise("mul", a, b)?;
        let out = self.node(a).values.iter().zip(&self.node(b).values).map(|(x, y)| x * y).collect();
        self.push(shape, out, Op::Mul(a, b), needs)
    }

    /// Concatenates along `axis` (0 = stack rows, 1 = widen rows).
    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        if axis > 1 {
            return Err(TensorError::BadAxis { op: "concat", axis, shape: self.node(parts[0]).shape.clone() });
        }
        let shapes: Vec<(usize, usize)> = parts.iter().map(|&p| self.rank2("concat", p)).collect::<Result<_>>()?;
        let (r0, c0) = shapes[0];
        let needs = parts.iter().any(|&p| self.node(p).needs_grad);
        if axis == 0 {
            if shapes.iter().any(|&(_, c)| c != c0) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat rows",
                    lhs: vec![r0, c0],
                    rhs: shapes.iter().find(|&&(_, c)| c != c0).map(|&(r, c)| vec![r, c]).unwrap(),
                });
            }
            let rows: usize = shapes.iter().map(|&(r, _)| r).sum();
            let mut out = Vec::with_capacity(rows * c0);
            for &p in parts {
                out.extend_from_slice(&self.node(p).values);
            }
            self.push(vec![rows, c0], out, Op::Concat { axis, parts: parts.to_vec() }, needs)
        } else {
            if shapes.iter().any(|&(r, _)| r != r0) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat cols",
                    lhs: vec![r0, c0],
                    rhs: shapes.iter().find(|&&(r, _)| r != r0).map(|&(r, c)| vec![r, c]).unwrap(),
                });
            }
            let cols: usize = shapes.iter().map(|&(_, c)| c).sum();
            let mut out = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for (&p, &(_, c)) in parts.iter().zip(&shapes) {
                    out.extend_from_slice(&self.node(p).values[i * c..(i + 1) * c]);
                }
            }
            self.push(vec![r0, cols], out, Op::Concat { axis, parts: parts.to_vec() }, needs)
        }
    }

    /// Gathers rows by index (repeats allowed); the backward pass
    /// scatter-adds, so this doubles as an embedding lookup.
    pub fn gather_rows(&mut self, src: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.rank2("gather_rows", src)?;
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(TensorError::BadIndex { op: "gather_rows", index: i, len: r });
            }
            out.extend_from_slice(&self.node(src).values[i * c..(i + 1) * c]);
        }
        let needs = self.node(src).needs_grad;
        self.push(vec![indices.len(), c], out, Op::SliceRows { src, indices: indices.to_vec() }, needs)
    }

    /// Gathers columns by index (repeats allowed).
    pub fn gather_cols(&mut self, src: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.rank2("gather_cols", src)?;
        let mut out = Vec::with_capacity(indices.len() * r);
        for i in 0..r {
            for &j in indices {
                if j >= c {
                    return Err(TensorError::BadIndex { op: "gather_cols", index: j, len: c });
                }
                out.push(self.node(src).values[i * c + j]);
            }
        }
        let needs = self.node(src).needs_grad;
        self.push(vec![r, indices.len()], out, Op::SliceCols { src, indices: indices.to_vec() }, needs)
    }

    /// Numerically stable softmax along `axis` of a matrix
    /// (1 = within each row, 0 = within each column).
    pub fn softmax(&mut self, src: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.rank2("softmax", src)?;
        if axis > 1 {
            return Err(TensorError::BadAxis { op: "softmax", axis, shape: vec![r, c] });
        }
        let v = &self.node(src).values;
        let mut out = vec![0.0f64; r * c];
        let (groups, len, stride, step) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
        for g in 0..groups {
            let base = g * stride;
            let mut max = f64::NEG_INFINITY;
            for i in 0..len {
                max = max.max(v[base + i * step]);
            }
            let mut denom = 0.0;
            for i in 0..len {
                let e = (v[base + i * step] - max).exp();
                out[base + i * step] = e;
                denom += e;
            }
            for i in 0..len {
                out[base + i * step] /= denom;
            }
        }
        let needs = self.node(src).needs_grad;
        self.push(vec![r, c], out, Op::Softmax { src, axis }, needs)
    }

    pub fn softplus(&mut self, src: Var) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| softplus(x)).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::Softplus(src), needs)
    }

    pub fn sigmoid(&mut self, src: Var) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| sigmoid(x)).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::Sigmoid(src), needs)
    }

    pub fn tanh(&mut self, src: Var) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| x.tanh()).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::Tanh(src), needs)
    }

    pub fn exp(&mut self, src: Var) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| x.exp()).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::Exp(src), needs)
    }

    /// Natural log; a zero or negative input surfaces as a non-finite error
    /// rather than propagating NaN through the tape.
    pub fn log(&mut self, src: Var) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| x.ln()).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::Log(src), needs)
    }

    /// Sum of all entries, as a `[1]` scalar.
    pub fn sum(&mut self, src: Var) -> Result<Var> {
        let total: f64 = self.node(src).values.iter().sum();
        let needs = self.node(src).needs_grad;
        self.push(vec![1], vec![total], Op::Sum(src), needs)
    }

    /// Mean of all entries, as a `[1]` scalar.
    pub fn mean(&mut self, src: Var) -> Result<Var> {
        let n = self.node(src).values.len();
        if n == 0 {
            return Err(TensorError::Empty { op: "mean" });
        }
        let total: f64 = self.node(src).values.iter().sum();
        let needs = self.node(src).needs_grad;
        self.push(vec![1], vec![total / n as f64], Op::Mean(src), needs)
    }

    pub fn scale(&mut self, src: Var, factor: f64) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| x * factor).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::Scale { src, factor }, needs)
    }

    pub fn add_scalar(&mut self, src: Var, value: f64) -> Result<Var> {
        let out = self.node(src).values.iter().map(|&x| x + value).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::AddScalar(src), needs)
    }

    /// Replaces entries where `keep` is false with `fill`; gradients flow
    /// only through kept positions. Used for causal / padding masks.
    pub fn masked_fill(&mut self, src: Var, keep: &[bool], fill: f64) -> Result<Var> {
        let v = &self.node(src).values;
        if keep.len() != v.len() {
            return Err(TensorError::LengthMismatch {
                shape: self.node(src).shape.clone(),
                expect: v.len(),
                got: keep.len(),
            });
        }
        let out = v.iter().zip(keep).map(|(&x, &k)| if k { x } else { fill }).collect();
        let shape = self.node(src).shape.clone();
        let needs = self.node(src).needs_grad;
        self.push(shape, out, Op::MaskedFill { src, keep: keep.to_vec() }, needs)
    }

    /// Tiles a `[1, n]` row into `[copies, n]`; the backward pass sums over
    /// the copies. This is the explicit broadcast for biases and shared state.
    pub fn repeat_rows(&mut self, src: Var, copies: usize) -> Result<Var> {
        let (r, c) = self.rank2("repeat_rows", src)?;
        if r != 1 {
            return Err(TensorError::ShapeMismatch { op: "repeat_rows", lhs: vec![r, c], rhs: vec![1, c] });
        }
        let mut out = Vec::with_capacity(copies * c);
        for _ in 0..copies {
            out.extend_from_slice(&self.node(src).values);
        }
        let needs = self.node(src).needs_grad;
        self.push(vec![copies, c], out, Op::RepeatRows { src, copies }, needs)
    }

    /// Reverse pass from a scalar loss.
    ///
    /// Interior adjoints are recomputed from scratch on every call, so two
    /// calls on the same tape produce identical `grad` vectors; accumulation
    /// across passes happens where the caller absorbs leaf gradients into
    /// [`Tensor::accumulate_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if numel(&self.node(loss).shape) != 1 {
            return Err(TensorError::NotScalar { shape: self.node(loss).shape.clone() });
        }
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            let grad = std::mem::take(&mut self.nodes[idx].grad);
            self.apply_backward(idx, &op, &grad);
            self.nodes[idx].grad = grad;
        }
        Ok(())
    }

    fn apply_backward(&mut self, idx: usize, op: &Op, gout: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ar, ac) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let bc = self.nodes[b.0].shape[1];
                if self.nodes[a.0].needs_grad {
                    // dA = dC * B^T
                    let bv = &self.nodes[b.0].values;
                    let mut da = vec![0.0f64; ar * ac];
                    for i in 0..ar {
                        for k in 0..ac {
                            let brow = &bv[k * bc..(k + 1) * bc];
                            let grow = &gout[i * bc..(i + 1) * bc];
                            let mut acc = 0.0;
                            for j in 0..bc {
                                acc += grow[j] * brow[j];
                            }
                            da[i * ac + k] = acc;
                        }
                    }
                    accumulate(&mut self.nodes[a.0].grad, &da);
                }
                if self.nodes[b.0].needs_grad {
                    // dB = A^T * dC
                    let av = self.nodes[a.0].values.clone();
                    let db = &mut self.nodes[b.0].grad;
                    for i in 0..ar {
                        let arow = &av[i * ac..(i + 1) * ac];
                        let grow = &gout[i * bc..(i + 1) * bc];
                        for (k, &aik) in arow.iter().enumerate() {
                            if aik == 0.0 {
                                continue;
                            }
                            let drow = &mut db[k * bc..(k + 1) * bc];
                            for (d, &g) in drow.iter_mut().zip(grow) {
                                *d += aik * g;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if self.nodes[a.0].needs_grad {
                    let (c, r) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                    let da = &mut self.nodes[a.0].grad;
                    for i in 0..c {
                        for j in 0..r {
                            da[j * c + i] += gout[i * r + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if self.nodes[a.0].needs_grad {
                    accumulate(&mut self.nodes[a.0].grad, gout);
                }
                if self.nodes[b.0].needs_grad {
                    accumulate(&mut self.nodes[b.0].grad, gout);
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    let bv = self.nodes[b.0].values.clone();
                    let da = &mut self.nodes[a.0].grad;
                    for ((d, &g), &v) in da.iter_mut().zip(gout).zip(&bv) {
                        *d += g * v;
                    }
                }
                if self.nodes[b.0].needs_grad {
                    let av = self.nodes[a.0].values.clone();
                    let db = &mut self.nodes[b.0].grad;
                    for ((d, &g), &v) in db.iter_mut().zip(gout).zip(&av) {
                        *d += g * v;
                    }
                }
            }
            Op::Concat { axis, ref parts } => {
                if axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].values.len();
                        if self.nodes[p.0].needs_grad {
                            accumulate(&mut self.nodes[p.0].grad, &gout[offset..offset + n]);
                        }
                        offset += n;
                    }
                } else {
                    let rows = self.nodes[idx].shape[0];
                    let total_cols = self.nodes[idx].shape[1];
                    let mut col_offset = 0;
                    for &p in parts {
                        let c = self.nodes[p.0].shape[1];
                        if self.nodes[p.0].needs_grad {
                            let dp = &mut self.nodes[p.0].grad;
                            for i in 0..rows {
                                for j in 0..c {
                                    dp[i * c + j] += gout[i * total_cols + col_offset + j];
                                }
                            }
                        }
                        col_offset += c;
                    }
                }
            }
            Op::SliceRows { src, ref indices } => {
                if self.nodes[src.0].needs_grad {
                    let c = self.nodes[src.0].shape[1];
                    let ds = &mut self.nodes[src.0].grad;
                    for (row, &i) in indices.iter().enumerate() {
                        for j in 0..c {
                            ds[i * c + j] += gout[row * c + j];
                        }
                    }
                }
            }
            Op::SliceCols { src, ref indices } => {
                if self.nodes[src.0].needs_grad {
                    let (r, c) = (self.nodes[src.0].shape[0], self.nodes[src.0].shape[1]);
                    let ds = &mut self.nodes[src.0].grad;
                    for i in 0..r {
                        for (col, &j) in indices.iter().enumerate() {
                            ds[i * c + j] += gout[i * indices.len() + col];
                        }
                    }
                    let _ = r;
                }
            }
            Op::Softmax { src, axis } => {
                if self.nodes[src.0].needs_grad {
                    let (r, c) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                    let y = self.nodes[idx].values.clone();
                    let ds = &mut self.nodes[src.0].grad;
                    let (groups, len, stride, step) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                    for g in 0..groups {
                        let base = g * stride;
                        let mut dot = 0.0;
                        for i in 0..len {
                            let p = base + i * step;
                            dot += gout[p] * y[p];
                        }
                        for i in 0..len {
                            let p = base + i * step;
                            ds[p] += y[p] * (gout[p] - dot);
                        }
                    }
                }
            }
            Op::Softplus(a) => {
                if self.nodes[a.0].needs_grad {
                    let av = self.nodes[a.0].values.clone();
                    let da = &mut self.nodes[a.0].grad;
                    for ((d, &g), &x) in da.iter_mut().zip(gout).zip(&av) {
                        *d += g * sigmoid(x);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.nodes[a.0].needs_grad {
                    let y = self.nodes[idx].values.clone();
                    let da = &mut self.nodes[a.0].grad;
                    for ((d, &g), &y) in da.iter_mut().zip(gout).zip(&y) {
                        *d += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if self.nodes[a.0].needs_grad {
                    let y = self.nodes[idx].values.clone();
                    let da = &mut self.nodes[a.0].grad;
                    for ((d, &g), &y) in da.iter_mut().zip(gout).zip(&y) {
                        *d += g * (1.0 - y * y);
                    }
                }
            }
            Op::Exp(a) => {
                if self.nodes[a.0].needs_grad {
                    let y = self.nodes[idx].values.clone();
                    let da = &mut self.nodes[a.0].grad;
                    for ((d, &g), &y) in da.iter_mut().zip(gout).zip(&y) {
                        *d += g * y;
                    }
                }
            }
            Op::Log(a) => {
                if self.nodes[a.0].needs_grad {
                    let av = self.nodes[a.0].values.clone();
                    let da = &mut self.nodes[a.0].grad;
                    for ((d, &g), &x) in da.iter_mut().zip(gout).zip(&av) {
                        *d += g / x;
                    }
                }
            }
            Op::Sum(a) => {
                if self.nodes[a.0].needs_grad {
                    let g = gout[0];
                    self.nodes[a.0].grad.iter_mut().for_each(|d| *d += g);
                }
            }
            Op::Mean(a) => {
                if self.nodes[a.0].needs_grad {
                    let n = self.nodes[a.0].values.len() as f64;
                    let g = gout[0] / n;
                    self.nodes[a.0].grad.iter_mut().for_each(|d| *d += g);
                }
            }
            Op::Scale { src, factor } => {
                if self.nodes[src.0].needs_grad {
                    let ds = &mut self.nodes[src.0].grad;
                    for (d, &g) in ds.iter_mut().zip(gout) {
                        *d += g * factor;
                    }
                }
            }
            Op::AddScalar(src) => {
                if self.nodes[src.0].needs_grad {
                    accumulate(&mut self.nodes[src.0].grad, gout);
                }
            }
            Op::MaskedFill { src, ref keep } => {
                if self.nodes[src.0].needs_grad {
                    let ds = &mut self.nodes[src.0].grad;
                    for ((d, &g), &k) in ds.iter_mut().zip(gout).zip(keep) {
                        if k {
                            *d += g;
                        }
                    }
                }
            }
            Op::RepeatRows { src, copies } => {
                if self.nodes[src.0].needs_grad {
                    let c = self.nodes[src.0].shape[1];
                    let ds = &mut self.nodes[src.0].grad;
                    for r in 0..copies {
                        for j in 0..c {
                            ds[j] += gout[r * c + j];
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Concat { .. } => "concat",
        Op::SliceRows { .. } => "gather_rows",
        Op::SliceCols { .. } => "gather_cols",
        Op::Softmax { .. } => "softmax",
        Op::Softplus(..) => "softplus",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::Scale { .. } => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::MaskedFill { .. } => "masked_fill",
        Op::RepeatRows { .. } => "repeat_rows",
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
