use super::tensor::{matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor};
use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnOp {
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Square,
    Recip,
    Atanh,
    AcoshClamped,
    TanhRatio,
    AtanhRatio,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(BinOp, usize, usize),
    Unary(UnOp, usize),
    Scale(usize, f64),
    Offset(usize),
    ClampMin(usize, f64),
    ClampMax(usize, f64),
    ClampMinCols(usize, Vec<usize>, f64),
    MatMul(usize, usize),
    MatMulNT(usize, usize),
    Gather(usize, Vec<Option<usize>>),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SumAll(usize),
    RowSums(usize),
    ColSums(usize),
    LogSumExpRows(usize),
    RowNorm(usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Operation tape. Nodes are appended in evaluation order, so the tape is
/// already topologically sorted for the reverse sweep.
///
/// Shape errors inside the tape are programming errors and panic; public
/// entry points validate shapes before recording.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let [r, c] = self.shape();
        write!(f, "Var#{}({r}x{c})", self.id)
    }
}

/// Gradients of one scalar output with respect to every earlier node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self
                    .shapes
                    .get(v.id)
                    .copied()
                    .unwrap_or_else(|| v.shape());
                Tensor::zeros(r, c)
            }
        }
    }
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> [usize; 2] {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast {a:?} with {b:?}")
        }
    };
    [dim(a[0], b[0]), dim(a[1], b[1])]
}

#[inline]
fn bidx(t: &Tensor, r: usize, c: usize) -> usize {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    rr * t.cols() + cc
}

fn binary_value(op: BinOp, a: &Tensor, b: &Tensor) -> Tensor {
    let [rows, cols] = broadcast_shape(a.shape(), b.shape());
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x = ad[bidx(a, r, c)];
            let y = bd[bidx(b, r, c)];
            out.push(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Max => {
                    if x >= y {
                        x
                    } else {
                        y
                    }
                }
            });
        }
    }
    Tensor::from_parts(rows, cols, out)
}

fn unary_value(op: UnOp, x: f64) -> f64 {
    match op {
        UnOp::Tanh => math::tanh(x),
        UnOp::Exp => math::exp(x),
        UnOp::Ln => math::ln(x),
        UnOp::Sqrt => math::sqrt(x),
        UnOp::Square => x * x,
        UnOp::Recip => 1.0 / x,
        UnOp::Atanh => math::atanh(x),
        UnOp::AcoshClamped => math::acosh_clamped(x),
        UnOp::TanhRatio => math::tanh_ratio(x),
        UnOp::AtanhRatio => math::atanh_ratio(x),
        UnOp::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
    }
}

/// d(op)/dx given input `x` and output `y`.
fn unary_grad(op: UnOp, x: f64, y: f64) -> f64 {
    match op {
        UnOp::Tanh => 1.0 - y * y,
        UnOp::Exp => y,
        UnOp::Ln => 1.0 / x,
        UnOp::Sqrt => {
            if y > 0.0 {
                0.5 / y
            } else {
                0.0
            }
        }
        UnOp::Square => 2.0 * x,
        UnOp::Recip => -y * y,
        UnOp::Atanh => 1.0 / (1.0 - x * x),
        UnOp::AcoshClamped => math::acosh_clamped_grad(x),
        UnOp::TanhRatio => math::tanh_ratio_grad(x),
        UnOp::AtanhRatio => math::atanh_ratio_grad(x),
        UnOp::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl core::fmt::Debug for Graph {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.len()).finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn with_value<R>(&self, id: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }

    /// Input node. Constants and parameters are both leaves; the caller
    /// decides which gradients to read.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn concat_cols<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        let nodes = self.nodes.borrow();
        let rows = nodes[parts[0].id].value.rows();
        let cols: usize = parts.iter().map(|p| nodes[p.id].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let t = &nodes[p.id].value;
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(t.row_slice(r));
            }
        }
        drop(nodes);
        let ids = parts.iter().map(|p| p.id).collect();
        self.push(Tensor::from_parts(rows, cols, data), Op::ConcatCols(ids))
    }

    /// Vertical concatenation of tensors with equal column counts.
    pub fn concat_rows<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        let nodes = self.nodes.borrow();
        let cols = nodes[parts[0].id].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = &nodes[p.id].value;
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        drop(nodes);
        let ids = parts.iter().map(|p| p.id).collect();
        self.push(Tensor::from_parts(rows, cols, data), Op::ConcatRows(ids))
    }

    /// Reverse sweep from the 1x1 node `out`.
    pub fn backward(&self, out: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[out.id].value.shape() != [1, 1] {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                nodes[out.id].value.shape()
            )));
        }
        let n = out.id + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[out.id] = Some(Tensor::scalar(1.0));
        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Binary(op, a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    let [rows, cols] = g.shape();
                    for r in 0..rows {
                        for c in 0..cols {
                            let go = g.data()[r * cols + c];
                            let (ia, ib) = (bidx(av, r, c), bidx(bv, r, c));
                            let (x, y) = (av.data()[ia], bv.data()[ib]);
                            let (da, db) = match op {
                                BinOp::Add => (go, go),
                                BinOp::Sub => (go, -go),
                                BinOp::Mul => (go * y, go * x),
                                BinOp::Div => (go / y, -go * x / (y * y)),
                                BinOp::Max => {
                                    if x >= y {
                                        (go, 0.0)
                                    } else {
                                        (0.0, go)
                                    }
                                }
                            };
                            ga.data_mut()[ia] += da;
                            gb.data_mut()[ib] += db;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Unary(op, a) => {
                    let xv = &nodes[*a].value;
                    let data = xv
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .zip(g.data())
                        .map(|((&x, &y), &go)| go * unary_grad(*op, x, y))
                        .collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::from_parts(xv.rows(), xv.cols(), data),
                    );
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|v| v * s)),
                Op::Offset(a) => accumulate(&mut grads, *a, g.clone()),
                Op::ClampMin(a, lo) => {
                    let xv = &nodes[*a].value;
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &go)| if x > *lo { go } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_parts(xv.rows(), xv.cols(), data));
                }
                Op::ClampMax(a, hi) => {
                    let xv = &nodes[*a].value;
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &go)| if x < *hi { go } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_parts(xv.rows(), xv.cols(), data));
                }
                Op::ClampMinCols(a, cols, lo) => {
                    let xv = &nodes[*a].value;
                    let mut ga = g.clone();
                    let width = xv.cols();
                    for r in 0..xv.rows() {
                        for &c in cols {
                            if xv.data()[r * width + c] <= *lo {
                                ga.data_mut()[r * width + c] = 0.0;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    accumulate(&mut grads, *a, matmul_nt_raw(&g, bv));
                    accumulate(&mut grads, *b, matmul_tn_raw(av, &g));
                }
                Op::MatMulNT(a, b) => {
                    // out = A B^T: dA = G B, dB = G^T A
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    accumulate(&mut grads, *a, matmul_raw(&g, bv));
                    accumulate(&mut grads, *b, matmul_tn_raw(&g, av));
                }
                Op::Gather(a, idx) => {
                    let xv = &nodes[*a].value;
                    let mut ga = Tensor::zeros(xv.rows(), xv.cols());
                    for (k, src) in idx.iter().enumerate() {
                        if let Some(i) = src {
                            ga.data_mut()[*i] += g.data()[k];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(ids) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in ids {
                        let pc = nodes[p].value.cols();
                        let mut data = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        accumulate(&mut grads, p, Tensor::from_parts(rows, pc, data));
                    }
                }
                Op::ConcatRows(ids) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in ids {
                        let pr = nodes[p].value.rows();
                        let data = g.data()[offset * cols..(offset + pr) * cols].to_vec();
                        offset += pr;
                        accumulate(&mut grads, p, Tensor::from_parts(pr, cols, data));
                    }
                }
                Op::SumAll(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.data()[0]));
                }
                Op::RowSums(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    let mut data = Vec::with_capacity(r * c);
                    for i in 0..r {
                        data.extend(core::iter::repeat_n(g.data()[i], c));
                    }
                    accumulate(&mut grads, *a, Tensor::from_parts(r, c, data));
                }
                Op::ColSums(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    let mut data = Vec::with_capacity(r * c);
                    for _ in 0..r {
                        data.extend_from_slice(g.data());
                    }
                    accumulate(&mut grads, *a, Tensor::from_parts(r, c, data));
                }
                Op::LogSumExpRows(a) => {
                    let xv = &nodes[*a].value;
                    let [r, c] = xv.shape();
                    let mut data = Vec::with_capacity(r * c);
                    for i in 0..r {
                        let lse = node.value.data()[i];
                        for &x in xv.row_slice(i) {
                            data.push(g.data()[i] * math::exp(x - lse));
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::from_parts(r, c, data));
                }
                Op::RowNorm(a) => {
                    let xv = &nodes[*a].value;
                    let [r, c] = xv.shape();
                    let mut data = Vec::with_capacity(r * c);
                    for i in 0..r {
                        let nrm = node.value.data()[i];
                        for &x in xv.row_slice(i) {
                            data.push(if nrm > 0.0 { g.data()[i] * x / nrm } else { 0.0 });
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::from_parts(r, c, data));
                }
            }
            grads[id] = Some(g);
        }
        let shapes = nodes[..n].iter().map(|nd| nd.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.with_value(self.id, Tensor::clone)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.graph.with_value(self.id, Tensor::shape)
    }

    pub fn rows(&self) -> usize {
        self.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.shape()[1]
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self) -> Result<f64> {
        self.graph.with_value(self.id, |t| {
            if t.shape() == [1, 1] {
                Ok(t.data()[0])
            } else {
                Err(Error::Shape(format!("expected scalar, got {:?}", t.shape())))
            }
        })
    }

    pub fn is_finite(&self) -> bool {
        self.graph.with_value(self.id, Tensor::is_finite)
    }

    fn binary(self, op: BinOp, other: Var<'g>) -> Var<'g> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            binary_value(op, &nodes[self.id].value, &nodes[other.id].value)
        };
        self.graph.push(value, Op::Binary(op, self.id, other.id))
    }

    fn unary(self, op: UnOp) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| t.map(|x| unary_value(op, x)));
        self.graph.push(value, Op::Unary(op, self.id))
    }

    /// Elementwise maximum; ties route the gradient to `self`.
    pub fn maximum(self, other: Var<'g>) -> Var<'g> {
        self.binary(BinOp::Max, other)
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(UnOp::Tanh)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(UnOp::Exp)
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(UnOp::Ln)
    }

    pub fn sqrt(self) -> Var<'g> {
        self.unary(UnOp::Sqrt)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(UnOp::Square)
    }

    pub fn recip(self) -> Var<'g> {
        self.unary(UnOp::Recip)
    }

    pub fn atanh(self) -> Var<'g> {
        self.unary(UnOp::Atanh)
    }

    /// `acosh(max(x, 1))` with zero gradient where clamped.
    pub fn acosh_clamped(self) -> Var<'g> {
        self.unary(UnOp::AcoshClamped)
    }

    /// `tanh(x)/x`, smooth through 0.
    pub fn tanh_ratio(self) -> Var<'g> {
        self.unary(UnOp::TanhRatio)
    }

    /// `atanh(x)/x`, smooth through 0.
    pub fn atanh_ratio(self) -> Var<'g> {
        self.unary(UnOp::AtanhRatio)
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(UnOp::Relu)
    }

    pub fn scale(self, s: f64) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| t.map(|x| x * s));
        self.graph.push(value, Op::Scale(self.id, s))
    }

    pub fn offset(self, s: f64) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| t.map(|x| x + s));
        self.graph.push(value, Op::Offset(self.id))
    }

    pub fn clamp_min(self, lo: f64) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| t.map(|x| if x > lo { x } else { lo }));
        self.graph.push(value, Op::ClampMin(self.id, lo))
    }

    pub fn clamp_max(self, hi: f64) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| t.map(|x| if x < hi { x } else { hi }));
        self.graph.push(value, Op::ClampMax(self.id, hi))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        self.clamp_min(lo).clamp_max(hi)
    }

    /// Floor the listed columns of every row at `lo`.
    pub fn clamp_min_cols(self, cols: &[usize], lo: f64) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| {
            let mut out = t.clone();
            let width = t.cols();
            for r in 0..t.rows() {
                for &c in cols {
                    let v = &mut out.data_mut()[r * width + c];
                    if *v <= lo {
                        *v = lo;
                    }
                }
            }
            out
        });
        self.graph
            .push(value, Op::ClampMinCols(self.id, cols.to_vec(), lo))
    }

    pub fn matmul(self, other: Var<'g>) -> Var<'g> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            assert_eq!(a.cols(), b.rows(), "matmul {:?} x {:?}", a.shape(), b.shape());
            matmul_raw(a, b)
        };
        self.graph.push(value, Op::MatMul(self.id, other.id))
    }

    /// `self * other^T`.
    pub fn matmul_t(self, other: Var<'g>) -> Var<'g> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            assert_eq!(a.cols(), b.cols(), "matmul_t {:?} x {:?}^T", a.shape(), b.shape());
            matmul_nt_raw(a, b)
        };
        self.graph.push(value, Op::MatMulNT(self.id, other.id))
    }

    /// General re-indexing: output element `k` (row-major in a `rows x cols`
    /// result) copies flat input element `index[k]`, or is zero for `None`.
    pub fn gather(self, rows: usize, cols: usize, index: Vec<Option<usize>>) -> Var<'g> {
        assert_eq!(index.len(), rows * cols, "gather index length");
        let value = self.graph.with_value(self.id, |t| {
            let data = index
                .iter()
                .map(|i| i.map(|i| t.data()[i]).unwrap_or(0.0))
                .collect();
            Tensor::from_parts(rows, cols, data)
        });
        self.graph.push(value, Op::Gather(self.id, index))
    }

    pub fn transpose(self) -> Var<'g> {
        let [r, c] = self.shape();
        let index = (0..c)
            .flat_map(|j| (0..r).map(move |i| Some(i * c + j)))
            .collect();
        self.gather(c, r, index)
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Var<'g> {
        let [r, c] = self.shape();
        assert_eq!(r * c, rows * cols, "reshape size");
        self.gather(rows, cols, (0..rows * cols).map(Some).collect())
    }

    pub fn select_rows(self, which: &[usize]) -> Var<'g> {
        let c = self.cols();
        let index = which
            .iter()
            .flat_map(|&i| (0..c).map(move |j| Some(i * c + j)))
            .collect();
        self.gather(which.len(), c, index)
    }

    pub fn row(self, i: usize) -> Var<'g> {
        self.select_rows(&[i])
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'g> {
        let [r, c] = self.shape();
        assert!(start + len <= c, "slice_cols out of range");
        let index = (0..r)
            .flat_map(|i| (start..start + len).map(move |j| Some(i * c + j)))
            .collect();
        self.gather(r, len, index)
    }

    /// Pick one element per row: `out[i] = self[i, cols[i]]` as an `n x 1` column.
    pub fn pick_per_row(self, cols: &[usize]) -> Var<'g> {
        let c = self.cols();
        let index = cols.iter().enumerate().map(|(i, &j)| Some(i * c + j)).collect();
        self.gather(cols.len(), 1, index)
    }

    pub fn sum(self) -> Var<'g> {
        let value = self
            .graph
            .with_value(self.id, |t| Tensor::scalar(t.data().iter().sum()));
        self.graph.push(value, Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.graph.with_value(self.id, Tensor::len) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn row_sums(self) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| {
            let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
            Tensor::from_parts(t.rows(), 1, data)
        });
        self.graph.push(value, Op::RowSums(self.id))
    }

    pub fn col_sums(self) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| {
            let mut data = vec![0.0; t.cols()];
            for r in 0..t.rows() {
                for (acc, v) in data.iter_mut().zip(t.row_slice(r)) {
                    *acc += v;
                }
            }
            Tensor::from_parts(1, t.cols(), data)
        });
        self.graph.push(value, Op::ColSums(self.id))
    }

    /// Row-wise `log(sum(exp(x)))` with max subtraction; `n x 1`.
    pub fn logsumexp_rows(self) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| {
            let data = (0..t.rows())
                .map(|r| {
                    let row = t.row_slice(r);
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    m + math::ln(row.iter().map(|&x| math::exp(x - m)).sum())
                })
                .collect();
            Tensor::from_parts(t.rows(), 1, data)
        });
        self.graph.push(value, Op::LogSumExpRows(self.id))
    }

    pub fn softmax_rows(self) -> Var<'g> {
        (self - self.logsumexp_rows()).exp()
    }

    /// Row-wise Euclidean norm (`n x 1`); the gradient at a zero row is zero.
    pub fn row_norm(self) -> Var<'g> {
        let value = self.graph.with_value(self.id, |t| {
            let data = (0..t.rows()).map(|r| math::norm(t.row_slice(r))).collect();
            Tensor::from_parts(t.rows(), 1, data)
        });
        self.graph.push(value, Op::RowNorm(self.id))
    }

    pub fn row_norm_sq(self) -> Var<'g> {
        (self * self).row_sums()
    }

    /// Row-wise inner products of two equally shaped tensors (`n x 1`).
    pub fn row_dot(self, other: Var<'g>) -> Var<'g> {
        (self * other).row_sums()
    }
}

macro_rules! var_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl<'g> $trait for Var<'g> {
            type Output = Var<'g>;
            fn $method(self, rhs: Var<'g>) -> Var<'g> {
                self.binary($op, rhs)
            }
        }
    };
}

var_binop!(Add, add, BinOp::Add);
var_binop!(Sub, sub, BinOp::Sub);
var_binop!(Mul, mul, BinOp::Mul);
var_binop!(Div, div, BinOp::Div);

impl<'g> Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}

impl<'g> Add<f64> for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: f64) -> Var<'g> {
        self.offset(rhs)
    }
}

impl<'g> Sub<f64> for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: f64) -> Var<'g> {
        self.offset(-rhs)
    }
}

impl<'g> Mul<f64> for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: f64) -> Var<'g> {
        self.scale(rhs)
    }
}

impl<'g> Div<f64> for Var<'g> {
    type Output = Var<'g>;
    fn div(self, rhs: f64) -> Var<'g> {
        self.scale(1.0 / rhs)
    }
}

impl<'g> Sub<Var<'g>> for f64 {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        rhs.scale(-1.0).offset(self)
    }
}

impl<'g> Add<Var<'g>> for f64 {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        rhs.offset(self)
    }
}

impl<'g> Mul<Var<'g>> for f64 {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        rhs.scale(self)
    }
}
