//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a shared handle to a row-major `f64` buffer. Operations go
//! through a [`Tape`], which records one entry per op; [`Tape::backward`]
//! replays the records in reverse and accumulates gradients into every
//! reachable leaf with `requires_grad` set.
//!
//! There is no broadcasting: every shape alignment is explicit, which keeps
//! each backward rule small enough to audit by hand.

mod gradcheck;

pub use gradcheck::{grad_check, grad_check_named};

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Epsilon added inside [`Tape::log_shifted`] when used for losses.
pub const LOG_GUARD: f64 = 1e-12;

// ── Tensor ───────────────────────────────────────────────────────────

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Shared handle to a dense value participating in a recorded computation.
///
/// Cloning a `Tensor` clones the handle, not the buffer: both handles refer
/// to the same node in the computation graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self::raw(shape, data, false))
    }

    /// A leaf that accumulates gradients during [`Tape::backward`].
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        t.inner.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::raw(vec![data.len()], data, false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::raw(vec![1], vec![value], false)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self::raw(shape, vec![0.0; numel], false)
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self::raw(shape, vec![1.0; numel], false)
    }

    fn raw(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                requires_grad,
                grad: None,
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Copy of the current values.
    pub fn value(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.inner.borrow().data[i]
    }

    /// Scalar content; panics if the tensor has more than one element.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() on non-scalar tensor");
        inner.data[0]
    }

    /// Copy of the accumulated gradient, if any backward pass reached this leaf.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Overwrite the values in place (shape must not change).
    pub fn set_value(&self, data: &[f64]) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if data.len() != inner.data.len() {
            return Err(Error::Dimension {
                op: "set_value",
                lhs: inner.shape.clone(),
                rhs: vec![data.len()],
            });
        }
        inner.data.copy_from_slice(data);
        Ok(())
    }

    /// Add `delta` to a single coordinate (used by finite differences).
    pub fn nudge(&self, i: usize, delta: f64) {
        self.inner.borrow_mut().data[i] += delta;
    }

    /// Overwrite a single coordinate.
    pub fn set_coord(&self, i: usize, value: f64) {
        self.inner.borrow_mut().data[i] = value;
    }

    /// In-place `data[i] -= step[i]`, used by optimizers.
    pub fn apply_step(&self, step: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        for (d, s) in inner.data.iter_mut().zip(step) {
            *d -= s;
        }
    }

    fn node_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        let n = inner.data.len();
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Bitwise equality of values, for determinism tests.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        let a = self.inner.borrow();
        let b = other.inner.borrow();
        a.shape == b.shape
            && a.data.len() == b.data.len()
            && a.data
                .iter()
                .zip(b.data.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(f, "Tensor{:?} {:?}", inner.shape, inner.data)
    }
}

// ── Operation kinds ──────────────────────────────────────────────────

/// Binary pointwise operations (equal shapes, no broadcasting).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Mul,
}

/// Unary activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Sigmoid,
    Tanh,
    Softmax,
}

enum Record {
    Matmul { a: Tensor, b: Tensor, out: Tensor },
    Elementwise { op: ElemOp, a: Tensor, b: Tensor, out: Tensor },
    Scale { x: Tensor, factor: f64, out: Tensor },
    Concat { a: Tensor, b: Tensor, out: Tensor },
    StackRows { rows: Vec<Tensor>, out: Tensor },
    Unary { kind: Activation, x: Tensor, out: Tensor },
    MaxPool { x: Tensor, out: Tensor, argmax: Vec<usize> },
    Lookup { table: Tensor, index: usize, out: Tensor },
    Sum { x: Tensor, out: Tensor },
    Pick { x: Tensor, index: usize, out: Tensor },
    LogShifted { x: Tensor, shift: f64, out: Tensor },
    DivByScalar { x: Tensor, denom: Tensor, out: Tensor },
}

impl Record {
    fn out(&self) -> &Tensor {
        match self {
            Record::Matmul { out, .. }
            | Record::Elementwise { out, .. }
            | Record::Scale { out, .. }
            | Record::Concat { out, .. }
            | Record::StackRows { out, .. }
            | Record::Unary { out, .. }
            | Record::MaxPool { out, .. }
            | Record::Lookup { out, .. }
            | Record::Sum { out, .. }
            | Record::Pick { out, .. }
            | Record::LogShifted { out, .. }
            | Record::DivByScalar { out, .. } => out,
        }
    }
}

// ── Tape ─────────────────────────────────────────────────────────────

/// Records every operation applied through it, in order.
///
/// One tape per forward pass; a tape must not be shared across threads.
/// Dropping the tape frees all intermediate buffers.
#[derive(Default)]
pub struct Tape {
    records: RefCell<Vec<Record>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.borrow().is_empty()
    }

    fn push(&self, rec: Record) {
        self.records.borrow_mut().push(rec);
    }

    /// Matrix product. Accepts `[m,k]×[k,n]`, `[m,k]×[k]` and `[m]×[m,n]`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let sa = a.shape();
        let sb = b.shape();
        let mismatch = || Error::Dimension {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        let out = match (sa.len(), sb.len()) {
            (2, 2) => {
                let (m, k) = (sa[0], sa[1]);
                let (k2, n) = (sb[0], sb[1]);
                if k != k2 {
                    return Err(mismatch());
                }
                let av = a.value();
                let bv = b.value();
                let mut data = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = av[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            data[i * n + j] += aip * bv[p * n + j];
                        }
                    }
                }
                Tensor::raw(vec![m, n], data, false)
            }
            (2, 1) => {
                let (m, k) = (sa[0], sa[1]);
                if k != sb[0] {
                    return Err(mismatch());
                }
                let av = a.value();
                let bv = b.value();
                let mut data = vec![0.0; m];
                for i in 0..m {
                    let mut acc = 0.0;
                    for p in 0..k {
                        acc += av[i * k + p] * bv[p];
                    }
                    data[i] = acc;
                }
                Tensor::raw(vec![m], data, false)
            }
            (1, 2) => {
                let m = sa[0];
                let (m2, n) = (sb[0], sb[1]);
                if m != m2 {
                    return Err(mismatch());
                }
                let av = a.value();
                let bv = b.value();
                let mut data = vec![0.0; n];
                for p in 0..m {
                    let vp = av[p];
                    if vp == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        data[j] += vp * bv[p * n + j];
                    }
                }
                Tensor::raw(vec![n], data, false)
            }
            _ => return Err(mismatch()),
        };
        self.push(Record::Matmul {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Pointwise binary op over identically shaped tensors.
    pub fn elementwise(&self, op: ElemOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op: "elementwise",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let av = a.value();
        let bv = b.value();
        let data: Vec<f64> = match op {
            ElemOp::Add => av.iter().zip(&bv).map(|(x, y)| x + y).collect(),
            ElemOp::Mul => av.iter().zip(&bv).map(|(x, y)| x * y).collect(),
        };
        let out = Tensor::raw(a.shape(), data, false);
        self.push(Record::Elementwise {
            op,
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise(ElemOp::Add, a, b)
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise(ElemOp::Mul, a, b)
    }

    /// Multiply every entry by a compile-time constant.
    pub fn scale(&self, x: &Tensor, factor: f64) -> Tensor {
        let data: Vec<f64> = x.value().iter().map(|v| v * factor).collect();
        let out = Tensor::raw(x.shape(), data, false);
        self.push(Record::Scale {
            x: x.clone(),
            factor,
            out: out.clone(),
        });
        out
    }

    /// Concatenation of two rank-1 tensors.
    pub fn concat(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rank() != 1 {
            return Err(Error::Rank {
                op: "concat",
                expected: 1,
                shape: a.shape(),
            });
        }
        if b.rank() != 1 {
            return Err(Error::Rank {
                op: "concat",
                expected: 1,
                shape: b.shape(),
            });
        }
        let mut data = a.value();
        data.extend_from_slice(&b.value());
        let out = Tensor::raw(vec![data.len()], data, false);
        self.push(Record::Concat {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Concatenate a slice of rank-1 tensors left to right.
    pub fn concat_all(&self, parts: &[Tensor]) -> Result<Tensor> {
        let mut iter = parts.iter();
        let first = iter
            .next()
            .ok_or(Error::EmptyInput { op: "concat_all" })?;
        let mut acc = first.clone();
        for part in iter {
            acc = self.concat(&acc, part)?;
        }
        Ok(acc)
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&self, rows: &[Tensor]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { op: "stack_rows" });
        }
        let cols = rows[0].numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.rank() != 1 {
                return Err(Error::Rank {
                    op: "stack_rows",
                    expected: 1,
                    shape: r.shape(),
                });
            }
            if r.numel() != cols {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    lhs: vec![cols],
                    rhs: r.shape(),
                });
            }
            data.extend_from_slice(&r.value());
        }
        let out = Tensor::raw(vec![rows.len(), cols], data, false);
        self.push(Record::StackRows {
            rows: rows.to_vec(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Apply an activation. `Softmax` requires a non-empty rank-1 input and
    /// is computed with max subtraction; the others apply pointwise.
    pub fn activation(&self, kind: Activation, x: &Tensor) -> Result<Tensor> {
        let xv = x.value();
        let data = match kind {
            Activation::Elu => xv
                .iter()
                .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
                .collect(),
            Activation::Sigmoid => xv.iter().map(|&v| stable_sigmoid(v)).collect(),
            Activation::Tanh => xv.iter().map(|&v| v.tanh()).collect(),
            Activation::Softmax => {
                if x.rank() != 1 {
                    return Err(Error::Rank {
                        op: "softmax",
                        expected: 1,
                        shape: x.shape(),
                    });
                }
                if xv.is_empty() {
                    return Err(Error::EmptyInput { op: "softmax" });
                }
                let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = xv.iter().map(|&v| (v - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            }
        };
        let out = Tensor::raw(x.shape(), data, false);
        self.push(Record::Unary {
            kind,
            x: x.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    pub fn elu(&self, x: &Tensor) -> Tensor {
        self.activation(Activation::Elu, x).expect("elu is total")
    }

    pub fn sigmoid(&self, x: &Tensor) -> Tensor {
        self.activation(Activation::Sigmoid, x)
            .expect("sigmoid is total")
    }

    pub fn tanh(&self, x: &Tensor) -> Tensor {
        self.activation(Activation::Tanh, x).expect("tanh is total")
    }

    pub fn softmax(&self, x: &Tensor) -> Result<Tensor> {
        self.activation(Activation::Softmax, x)
    }

    /// Per-column maximum over the rows of a matrix. The gradient is routed
    /// to the first row attaining each column's maximum.
    pub fn max_pool_positions(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 {
            return Err(Error::Rank {
                op: "max_pool_positions",
                expected: 2,
                shape: x.shape(),
            });
        }
        let shape = x.shape();
        let (rows, cols) = (shape[0], shape[1]);
        if rows == 0 {
            return Err(Error::Degenerate {
                op: "max_pool_positions",
                detail: "empty position axis".into(),
            });
        }
        let xv = x.value();
        let mut data = vec![f64::NEG_INFINITY; cols];
        let mut argmax = vec![0usize; cols];
        for r in 0..rows {
            for c in 0..cols {
                let v = xv[r * cols + c];
                if v > data[c] {
                    data[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let out = Tensor::raw(vec![cols], data, false);
        self.push(Record::MaxPool {
            x: x.clone(),
            out: out.clone(),
            argmax,
        });
        Ok(out)
    }

    /// Row lookup in a `[V, d]` table; the backward rule scatters into the row.
    pub fn embedding_lookup(&self, table: &Tensor, index: usize) -> Result<Tensor> {
        if table.rank() != 2 {
            return Err(Error::Rank {
                op: "embedding_lookup",
                expected: 2,
                shape: table.shape(),
            });
        }
        let shape = table.shape();
        let (v, d) = (shape[0], shape[1]);
        if index >= v {
            return Err(Error::Index {
                op: "embedding_lookup",
                index,
                size: v,
            });
        }
        let data = table.value()[index * d..(index + 1) * d].to_vec();
        let out = Tensor::raw(vec![d], data, false);
        self.push(Record::Lookup {
            table: table.clone(),
            index,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Sum of all entries, as a length-1 tensor.
    pub fn sum(&self, x: &Tensor) -> Tensor {
        let total: f64 = x.value().iter().sum();
        let out = Tensor::raw(vec![1], vec![total], false);
        self.push(Record::Sum {
            x: x.clone(),
            out: out.clone(),
        });
        out
    }

    /// Inner product of two equally shaped tensors.
    pub fn dot(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let prod = self.mul(a, b)?;
        Ok(self.sum(&prod))
    }

    /// Single entry of a rank-1 tensor, as a length-1 tensor.
    pub fn pick(&self, x: &Tensor, index: usize) -> Result<Tensor> {
        if x.rank() != 1 {
            return Err(Error::Rank {
                op: "pick",
                expected: 1,
                shape: x.shape(),
            });
        }
        if index >= x.numel() {
            return Err(Error::Index {
                op: "pick",
                index,
                size: x.numel(),
            });
        }
        let out = Tensor::raw(vec![1], vec![x.get(index)], false);
        self.push(Record::Pick {
            x: x.clone(),
            index,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Pointwise `ln(x + shift)`; `shift` guards against log of zero.
    pub fn log_shifted(&self, x: &Tensor, shift: f64) -> Tensor {
        let data: Vec<f64> = x.value().iter().map(|v| (v + shift).ln()).collect();
        let out = Tensor::raw(x.shape(), data, false);
        self.push(Record::LogShifted {
            x: x.clone(),
            shift,
            out: out.clone(),
        });
        out
    }

    /// Divide every entry of `x` by a length-1 tensor `denom`.
    pub fn div_by_scalar(&self, x: &Tensor, denom: &Tensor) -> Result<Tensor> {
        if denom.numel() != 1 {
            return Err(Error::Dimension {
                op: "div_by_scalar",
                lhs: x.shape(),
                rhs: denom.shape(),
            });
        }
        let d = denom.get(0);
        let data: Vec<f64> = x.value().iter().map(|v| v / d).collect();
        let out = Tensor::raw(x.shape(), data, false);
        self.push(Record::DivByScalar {
            x: x.clone(),
            denom: denom.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Normalize a strictly positive vector to sum 1: `x / Σx`.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        let total = self.sum(x);
        self.div_by_scalar(x, &total)
    }

    /// Reverse pass from a scalar loss. Every `requires_grad` leaf reachable
    /// from `loss` receives its gradient contribution; calling `backward`
    /// again without [`Tensor::zero_grad`] accumulates.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Rank {
                op: "backward",
                expected: 1,
                shape: loss.shape(),
            });
        }
        use std::collections::HashMap;
        let mut flow: HashMap<usize, Vec<f64>> = HashMap::new();
        flow.insert(loss.node_id(), vec![1.0]);

        let records = self.records.borrow();
        // Leaves are collected in traversal order so each deposits exactly once.
        let mut leaves: Vec<Tensor> = Vec::new();
        let mut seen: std::collections::HashSet<usize> = std::collections::HashSet::new();
        if loss.requires_grad() && seen.insert(loss.node_id()) {
            leaves.push(loss.clone());
        }

        for rec in records.iter().rev() {
            let Some(g) = flow.get(&rec.out().node_id()).cloned() else {
                continue;
            };
            match rec {
                Record::Matmul { a, b, .. } => {
                    backward_matmul(a, b, &g, &mut flow);
                }
                Record::Elementwise { op, a, b, .. } => match op {
                    ElemOp::Add => {
                        add_flow(&mut flow, a, &g);
                        add_flow(&mut flow, b, &g);
                    }
                    ElemOp::Mul => {
                        let bv = b.value();
                        let ga: Vec<f64> = g.iter().zip(&bv).map(|(gi, bi)| gi * bi).collect();
                        add_flow(&mut flow, a, &ga);
                        let av = a.value();
                        let gb: Vec<f64> = g.iter().zip(&av).map(|(gi, ai)| gi * ai).collect();
                        add_flow(&mut flow, b, &gb);
                    }
                },
                Record::Scale { x, factor, .. } => {
                    let gx: Vec<f64> = g.iter().map(|gi| gi * factor).collect();
                    add_flow(&mut flow, x, &gx);
                }
                Record::Concat { a, b, .. } => {
                    let na = a.numel();
                    add_flow(&mut flow, a, &g[..na]);
                    add_flow(&mut flow, b, &g[na..]);
                }
                Record::StackRows { rows, .. } => {
                    let cols = if rows.is_empty() { 0 } else { rows[0].numel() };
                    for (i, row) in rows.iter().enumerate() {
                        add_flow(&mut flow, row, &g[i * cols..(i + 1) * cols]);
                    }
                }
                Record::Unary { kind, x, out } => {
                    let ov = out.value();
                    let gx: Vec<f64> = match kind {
                        Activation::Elu => {
                            let xv = x.value();
                            g.iter()
                                .zip(xv.iter().zip(&ov))
                                .map(|(gi, (&xi, &oi))| if xi > 0.0 { *gi } else { gi * (oi + 1.0) })
                                .collect()
                        }
                        Activation::Sigmoid => g
                            .iter()
                            .zip(&ov)
                            .map(|(gi, &s)| gi * s * (1.0 - s))
                            .collect(),
                        Activation::Tanh => g
                            .iter()
                            .zip(&ov)
                            .map(|(gi, &t)| gi * (1.0 - t * t))
                            .collect(),
                        Activation::Softmax => {
                            let inner: f64 = g.iter().zip(&ov).map(|(gi, si)| gi * si).sum();
                            g.iter()
                                .zip(&ov)
                                .map(|(gi, &si)| si * (gi - inner))
                                .collect()
                        }
                    };
                    add_flow(&mut flow, x, &gx);
                }
                Record::MaxPool { x, argmax, .. } => {
                    let cols = argmax.len();
                    let mut gx = vec![0.0; x.numel()];
                    for (c, &r) in argmax.iter().enumerate() {
                        gx[r * cols + c] += g[c];
                    }
                    add_flow(&mut flow, x, &gx);
                }
                Record::Lookup { table, index, .. } => {
                    let d = g.len();
                    let mut gt = vec![0.0; table.numel()];
                    gt[index * d..(index + 1) * d].copy_from_slice(&g);
                    add_flow(&mut flow, table, &gt);
                }
                Record::Sum { x, .. } => {
                    let gx = vec![g[0]; x.numel()];
                    add_flow(&mut flow, x, &gx);
                }
                Record::Pick { x, index, .. } => {
                    let mut gx = vec![0.0; x.numel()];
                    gx[*index] = g[0];
                    add_flow(&mut flow, x, &gx);
                }
                Record::LogShifted { x, shift, .. } => {
                    let xv = x.value();
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(&xv)
                        .map(|(gi, &xi)| gi / (xi + shift))
                        .collect();
                    add_flow(&mut flow, x, &gx);
                }
                Record::DivByScalar { x, denom, out } => {
                    let d = denom.get(0);
                    let gx: Vec<f64> = g.iter().map(|gi| gi / d).collect();
                    add_flow(&mut flow, x, &gx);
                    let ov = out.value();
                    let gd: f64 = -g.iter().zip(&ov).map(|(gi, oi)| gi * oi).sum::<f64>() / d;
                    add_flow(&mut flow, denom, &[gd]);
                }
            }
            // Collect grad-requiring inputs in deterministic record order.
            for input in record_inputs(rec) {
                if input.requires_grad() && seen.insert(input.node_id()) {
                    leaves.push(input.clone());
                }
            }
        }

        for leaf in &leaves {
            if let Some(g) = flow.get(&leaf.node_id()) {
                leaf.accumulate_grad(g);
            }
        }
        Ok(())
    }
}

fn record_inputs(rec: &Record) -> Vec<&Tensor> {
    match rec {
        Record::Matmul { a, b, .. }
        | Record::Elementwise { a, b, .. }
        | Record::Concat { a, b, .. } => vec![a, b],
        Record::StackRows { rows, .. } => rows.iter().collect(),
        Record::Scale { x, .. }
        | Record::Unary { x, .. }
        | Record::MaxPool { x, .. }
        | Record::Sum { x, .. }
        | Record::Pick { x, .. }
        | Record::LogShifted { x, .. } => vec![x],
        Record::Lookup { table, .. } => vec![table],
        Record::DivByScalar { x, denom, .. } => vec![x, denom],
    }
}

fn add_flow(flow: &mut std::collections::HashMap<usize, Vec<f64>>, t: &Tensor, g: &[f64]) {
    let entry = flow
        .entry(t.node_id())
        .or_insert_with(|| vec![0.0; t.numel()]);
    for (a, b) in entry.iter_mut().zip(g) {
        *a += b;
    }
}

fn backward_matmul(
    a: &Tensor,
    b: &Tensor,
    g: &[f64],
    flow: &mut std::collections::HashMap<usize, Vec<f64>>,
) {
    let sa = a.shape();
    let sb = b.shape();
    let av = a.value();
    let bv = b.value();
    match (sa.len(), sb.len()) {
        (2, 2) => {
            let (m, k) = (sa[0], sa[1]);
            let n = sb[1];
            // dA = g · Bᵀ
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += g[i * n + j] * bv[p * n + j];
                    }
                    ga[i * k + p] = acc;
                }
            }
            add_flow(flow, a, &ga);
            // dB = Aᵀ · g
            let mut gb = vec![0.0; k * n];
            for p in 0..k {
                for i in 0..m {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        gb[p * n + j] += aip * g[i * n + j];
                    }
                }
            }
            add_flow(flow, b, &gb);
        }
        (2, 1) => {
            let (m, k) = (sa[0], sa[1]);
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for j in 0..k {
                    ga[i * k + j] = g[i] * bv[j];
                }
            }
            add_flow(flow, a, &ga);
            let mut gb = vec![0.0; k];
            for j in 0..k {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += g[i] * av[i * k + j];
                }
                gb[j] = acc;
            }
            add_flow(flow, b, &gb);
        }
        (1, 2) => {
            let m = sa[0];
            let n = sb[1];
            let mut ga = vec![0.0; m];
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += g[j] * bv[i * n + j];
                }
                ga[i] = acc;
            }
            add_flow(flow, a, &ga);
            let mut gb = vec![0.0; m * n];
            for i in 0..m {
                let vi = av[i];
                if vi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    gb[i * n + j] = vi * g[j];
                }
            }
            add_flow(flow, b, &gb);
        }
        _ => unreachable!("matmul shapes validated at record time"),
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests;
