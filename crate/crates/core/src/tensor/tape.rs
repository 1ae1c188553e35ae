use std::cell::RefCell;

use super::Tensor;
use crate::error::{Error, Result};

/// Elementwise nonlinearities understood by the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    /// ELU with unit scale.
    Elu,
    Exp,
    Log1p,
    Ln,
    LeakyRelu(f64),
    Square,
    Neg,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Relu => x.max(0.0),
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::Exp => x.exp(),
            Unary::Log1p => x.ln_1p(),
            Unary::Ln => x.ln(),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Square => x * x,
            Unary::Neg => -x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::Exp => y,
            Unary::Log1p => 1.0 / (1.0 + x),
            Unary::Ln => 1.0 / x,
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Neg => -1.0,
        }
    }

    fn check_domain(self, data: &[f64]) -> Result<()> {
        let (op, bad): (&'static str, fn(f64) -> bool) = match self {
            Unary::Log1p => ("log1p", |v| !(v > -1.0)),
            Unary::Ln => ("ln", |v| !(v > 0.0)),
            _ => return Ok(()),
        };
        match data.iter().position(|&v| bad(v)) {
            Some(index) => Err(Error::Domain {
                op,
                index,
                value: data[index],
            }),
            None => Ok(()),
        }
    }
}

/// Reduction used by [`Var::segment_aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Sum,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `[n, m] + [m]` broadcast over rows.
    AddRow(usize, usize),
    /// `[n, m] * [n, 1]` broadcast over columns.
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(usize, Unary),
    Concat {
        parts: Vec<usize>,
        outer: usize,
        widths: Vec<usize>,
    },
    SliceCols {
        input: usize,
        start: usize,
    },
    GatherRows {
        input: usize,
        index: Vec<usize>,
    },
    Segment {
        input: usize,
        segments: Vec<usize>,
        mode: Aggregation,
        /// Mean: per-segment counts. Max: winning row per (segment, column).
        aux: Vec<usize>,
    },
    SegmentSoftmax {
        input: usize,
        segments: Vec<usize>,
        n_segments: usize,
    },
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Ordered record of executed operations.
///
/// Each node stores its forward value; adjoints are replayed in reverse
/// insertion order, so every recorded operation is visited exactly once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
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

    /// Registers a leaf that accumulates a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'_> {
        self.constant(Tensor::zeros(shape))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Concatenates tensors along `axis`; all other dimensions must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        if parts.len() == 1 {
            return Ok(*first);
        }
        let (value, outer, widths) = {
            let nodes = self.nodes.borrow();
            let base = nodes[first.id].value.shape().to_vec();
            if axis >= base.len() {
                return Err(Error::Contract(format!(
                    "concat axis {axis} out of range for rank {}",
                    base.len()
                )));
            }
            let outer: usize = base[..axis].iter().product();
            let inner: usize = base[axis + 1..].iter().product();
            let mut widths = Vec::with_capacity(parts.len());
            let mut axis_len = 0;
            for p in parts {
                let s = nodes[p.id].value.shape();
                let agrees = s.len() == base.len()
                    && s.iter()
                        .zip(&base)
                        .enumerate()
                        .all(|(d, (a, b))| d == axis || a == b);
                if !agrees {
                    return Err(Error::Dimension {
                        op: "concat",
                        lhs: base.clone(),
                        rhs: s.to_vec(),
                    });
                }
                widths.push(s[axis] * inner);
                axis_len += s[axis];
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(outer * total);
            for o in 0..outer {
                for (p, &w) in parts.iter().zip(&widths) {
                    data.extend_from_slice(&nodes[p.id].value.data()[o * w..(o + 1) * w]);
                }
            }
            let mut shape = base;
            shape[axis] = axis_len;
            (Tensor::new(shape, data)?, outer, widths)
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.requires(&ids);
        Ok(self.push(
            value,
            Op::Concat {
                parts: ids,
                outer,
                widths,
            },
            rg,
        ))
    }

    /// Computes gradients of the scalar `loss` with respect to every tracked leaf.
    ///
    /// Gradients are stored on the leaves and read back with [`Var::grad`].
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.id).map(|_| None).collect();
        adj[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !nodes[id].requires_grad {
                continue;
            }
            if let Op::Leaf = nodes[id].op {
                let shape = nodes[id].value.shape().to_vec();
                let node = &mut nodes[id];
                match node.grad.as_mut() {
                    Some(existing) => {
                        for (e, v) in existing.data_mut().iter_mut().zip(&g) {
                            *e += v;
                        }
                    }
                    None => node.grad = Some(Tensor::new(shape, g)?),
                }
                continue;
            }
            propagate(&nodes, id, &g, &mut adj);
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, delta: Vec<f64>) {
    if !nodes[id].requires_grad {
        return;
    }
    match adj[id].as_mut() {
        Some(acc) => {
            for (a, d) in acc.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => adj[id] = Some(delta),
    }
}

fn accumulate_with(
    adj: &mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: usize,
    f: impl FnOnce(&mut [f64]),
) {
    if !nodes[id].requires_grad {
        return;
    }
    let len = nodes[id].value.numel();
    let acc = adj[id].get_or_insert_with(|| vec![0.0; len]);
    f(acc);
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let (n, k) = (av.shape()[0], av.shape()[1]);
            let m = bv.shape()[1];
            let (ad, bd) = (av.data(), bv.data());
            accumulate_with(adj, nodes, a, |da| {
                // dA = G * B^T
                for i in 0..n {
                    let gi = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let bp = &bd[p * m..(p + 1) * m];
                        let mut s = 0.0;
                        for j in 0..m {
                            s += gi[j] * bp[j];
                        }
                        da[i * k + p] += s;
                    }
                }
            });
            accumulate_with(adj, nodes, b, |db| {
                // dB = A^T * G
                for i in 0..n {
                    let gi = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        let row = &mut db[p * m..(p + 1) * m];
                        for j in 0..m {
                            row[j] += aip * gi[j];
                        }
                    }
                }
            });
        }
        &Op::Add(a, b) => {
            accumulate(adj, nodes, a, g.to_vec());
            accumulate(adj, nodes, b, g.to_vec());
        }
        &Op::Sub(a, b) => {
            accumulate(adj, nodes, a, g.to_vec());
            accumulate(adj, nodes, b, g.iter().map(|v| -v).collect());
        }
        &Op::Mul(a, b) => {
            let (ad, bd) = (nodes[a].value.data(), nodes[b].value.data());
            accumulate(adj, nodes, a, g.iter().zip(bd).map(|(g, b)| g * b).collect());
            accumulate(adj, nodes, b, g.iter().zip(ad).map(|(g, a)| g * a).collect());
        }
        &Op::AddRow(a, b) => {
            accumulate(adj, nodes, a, g.to_vec());
            let m = nodes[b].value.numel();
            accumulate_with(adj, nodes, b, |db| {
                for row in g.chunks(m) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            });
        }
        &Op::MulCol(a, b) => {
            let m = nodes[a].value.cols();
            let (ad, bd) = (nodes[a].value.data(), nodes[b].value.data());
            accumulate(
                adj,
                nodes,
                a,
                g.chunks(m)
                    .zip(bd)
                    .flat_map(|(row, &s)| row.iter().map(move |v| v * s))
                    .collect(),
            );
            accumulate(
                adj,
                nodes,
                b,
                g.chunks(m)
                    .zip(ad.chunks(m))
                    .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                    .collect(),
            );
        }
        &Op::Scale(a, s) => accumulate(adj, nodes, a, g.iter().map(|v| v * s).collect()),
        &Op::AddScalar(a) => accumulate(adj, nodes, a, g.to_vec()),
        &Op::Unary(a, f) => {
            let xd = nodes[a].value.data();
            let yd = out.data();
            accumulate(
                adj,
                nodes,
                a,
                g.iter()
                    .zip(xd.iter().zip(yd))
                    .map(|(g, (&x, &y))| g * f.derivative(x, y))
                    .collect(),
            );
        }
        Op::Concat {
            parts,
            outer,
            widths,
        } => {
            let total: usize = widths.iter().sum();
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(widths) {
                let mut delta = Vec::with_capacity(outer * w);
                for o in 0..*outer {
                    let start = o * total + offset;
                    delta.extend_from_slice(&g[start..start + w]);
                }
                accumulate(adj, nodes, p, delta);
                offset += w;
            }
        }
        &Op::SliceCols { input, start } => {
            let m_in = nodes[input].value.cols();
            let m_out = out.cols();
            accumulate_with(adj, nodes, input, |d| {
                for (r, row) in g.chunks(m_out).enumerate() {
                    let dst = &mut d[r * m_in + start..r * m_in + start + m_out];
                    for (x, v) in dst.iter_mut().zip(row) {
                        *x += v;
                    }
                }
            });
        }
        Op::GatherRows { input, index } => {
            let c = out.cols();
            accumulate_with(adj, nodes, *input, |d| {
                for (row, &src) in g.chunks(c).zip(index) {
                    for (x, v) in d[src * c..(src + 1) * c].iter_mut().zip(row) {
                        *x += v;
                    }
                }
            });
        }
        Op::Segment {
            input,
            segments,
            mode,
            aux,
        } => {
            let c = out.cols();
            accumulate_with(adj, nodes, *input, |d| match mode {
                Aggregation::Sum | Aggregation::Mean => {
                    for (e, &s) in segments.iter().enumerate() {
                        let scale = if *mode == Aggregation::Mean {
                            1.0 / aux[s] as f64
                        } else {
                            1.0
                        };
                        for j in 0..c {
                            d[e * c + j] += g[s * c + j] * scale;
                        }
                    }
                }
                Aggregation::Max => {
                    for (slot, &winner) in aux.iter().enumerate() {
                        if winner != usize::MAX {
                            let (s, j) = (slot / c, slot % c);
                            d[winner * c + j] += g[s * c + j];
                        }
                    }
                }
            });
        }
        Op::SegmentSoftmax {
            input,
            segments,
            n_segments,
        } => {
            let c = out.cols();
            let y = out.data();
            let mut dot = vec![0.0; n_segments * c];
            for (e, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    dot[s * c + j] += g[e * c + j] * y[e * c + j];
                }
            }
            accumulate_with(adj, nodes, *input, |d| {
                for (e, &s) in segments.iter().enumerate() {
                    for j in 0..c {
                        let k = e * c + j;
                        d[k] += y[k] * (g[k] - dot[s * c + j]);
                    }
                }
            });
        }
        &Op::Sum(a) => {
            let n = nodes[a].value.numel();
            accumulate(adj, nodes, a, vec![g[0]; n]);
        }
        &Op::Mean(a) => {
            let n = nodes[a].value.numel();
            accumulate(adj, nodes, a, vec![g[0] / n as f64; n]);
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Snapshot of the forward value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Gradient stored by the last [`Tape::backward`]; `None` for untracked tensors.
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }

    fn with<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract("operands live on different tapes".into()))
        }
    }

    fn unary_node(&self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary_node(&self, other: &Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(Error::Dimension {
                    op: "matmul",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let (ad, bd) = (a.data(), b.data());
            let mut c = vec![0.0; n * m];
            for i in 0..n {
                let ci = &mut c[i * m..(i + 1) * m];
                for p in 0..k {
                    let aip = ad[i * k + p];
                    let bp = &bd[p * m..(p + 1) * m];
                    for j in 0..m {
                        ci[j] += aip * bp[j];
                    }
                }
            }
            Tensor::new(vec![n, m], c)?
        };
        Ok(self.binary_node(other, value, Op::MatMul(self.id, other.id)))
    }

    fn zip_same(
        &self,
        other: &Var<'t>,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.same_tape(other)?;
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op: op_name,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape().to_vec(), data)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let v = self.zip_same(other, "add", |a, b| a + b)?;
        Ok(self.binary_node(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let v = self.zip_same(other, "sub", |a, b| a - b)?;
        Ok(self.binary_node(other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let v = self.zip_same(other, "mul", |a, b| a * b)?;
        Ok(self.binary_node(other, v, Op::Mul(self.id, other.id)))
    }

    /// Adds a bias row (`[m]` or `[1, m]`) to every row of a `[n, m]` matrix.
    pub fn add_row(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(bias)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[bias.id].value);
            let m = b.numel();
            if a.shape().len() != 2 || a.shape()[1] != m {
                return Err(Error::Dimension {
                    op: "add_row",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let mut data = a.data().to_vec();
            for row in data.chunks_mut(m) {
                for (x, v) in row.iter_mut().zip(b.data()) {
                    *x += v;
                }
            }
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.binary_node(bias, value, Op::AddRow(self.id, bias.id)))
    }

    /// Multiplies every row `i` of a `[n, m]` matrix by `scale[i]` (shape `[n, 1]`).
    pub fn mul_col(&self, scale: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(scale)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, s) = (&nodes[self.id].value, &nodes[scale.id].value);
            if a.rows() != s.numel() || s.numel() != s.rows() {
                return Err(Error::Dimension {
                    op: "mul_col",
                    lhs: a.shape().to_vec(),
                    rhs: s.shape().to_vec(),
                });
            }
            let m = a.cols();
            let data = a
                .data()
                .chunks(m)
                .zip(s.data())
                .flat_map(|(row, &f)| row.iter().map(move |v| v * f))
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.binary_node(scale, value, Op::MulCol(self.id, scale.id)))
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        let v = self.with(|t| {
            Tensor::new(
                t.shape().to_vec(),
                t.data().iter().map(|x| x * factor).collect(),
            )
        });
        self.unary_node(v.expect("shape preserved"), Op::Scale(self.id, factor))
    }

    pub fn add_scalar(&self, offset: f64) -> Var<'t> {
        let v = self.with(|t| {
            Tensor::new(
                t.shape().to_vec(),
                t.data().iter().map(|x| x + offset).collect(),
            )
        });
        self.unary_node(v.expect("shape preserved"), Op::AddScalar(self.id))
    }

    pub fn elementwise(&self, f: Unary) -> Result<Var<'t>> {
        let v = self.with(|t| -> Result<Tensor> {
            f.check_domain(t.data())?;
            Tensor::new(
                t.shape().to_vec(),
                t.data().iter().map(|&x| f.apply(x)).collect(),
            )
        })?;
        Ok(self.unary_node(v, Op::Unary(self.id, f)))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.elementwise(Unary::Sigmoid).expect("total function")
    }

    pub fn tanh(&self) -> Var<'t> {
        self.elementwise(Unary::Tanh).expect("total function")
    }

    pub fn relu(&self) -> Var<'t> {
        self.elementwise(Unary::Relu).expect("total function")
    }

    pub fn elu(&self) -> Var<'t> {
        self.elementwise(Unary::Elu).expect("total function")
    }

    pub fn exp(&self) -> Var<'t> {
        self.elementwise(Unary::Exp).expect("total function")
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.elementwise(Unary::LeakyRelu(slope))
            .expect("total function")
    }

    pub fn square(&self) -> Var<'t> {
        self.elementwise(Unary::Square).expect("total function")
    }

    pub fn neg(&self) -> Var<'t> {
        self.elementwise(Unary::Neg).expect("total function")
    }

    pub fn log1p(&self) -> Result<Var<'t>> {
        self.elementwise(Unary::Log1p)
    }

    pub fn ln(&self) -> Result<Var<'t>> {
        self.elementwise(Unary::Ln)
    }

    /// Columns `[start, start + len)` of a `[n, m]` matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let v = self.with(|t| -> Result<Tensor> {
            if t.shape().len() != 2 || start + len > t.shape()[1] || len == 0 {
                return Err(Error::Dimension {
                    op: "slice_cols",
                    lhs: t.shape().to_vec(),
                    rhs: vec![start, len],
                });
            }
            let m = t.shape()[1];
            let data = t
                .data()
                .chunks(m)
                .flat_map(|row| row[start..start + len].iter().copied())
                .collect();
            Tensor::new(vec![t.rows(), len], data)
        })?;
        Ok(self.unary_node(v, Op::SliceCols { input: self.id, start }))
    }

    /// Selects rows by index (rows may repeat); the adjoint scatter-adds back.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Var<'t>> {
        let v = self.with(|t| t.select_rows(index))?;
        Ok(self.unary_node(
            v,
            Op::GatherRows {
                input: self.id,
                index: index.to_vec(),
            },
        ))
    }

    /// Aggregates the rows of `[E, d]` into `n_segments` rows by segment id.
    /// Segments that receive no rows are zero.
    pub fn segment_aggregate(
        &self,
        segments: &[usize],
        n_segments: usize,
        mode: Aggregation,
    ) -> Result<Var<'t>> {
        let (value, aux) = self.with(|t| -> Result<(Tensor, Vec<usize>)> {
            if segments.len() != t.rows() {
                return Err(Error::Dimension {
                    op: "segment_aggregate",
                    lhs: t.shape().to_vec(),
                    rhs: vec![segments.len()],
                });
            }
            if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
                return Err(Error::Index {
                    what: "segment ids",
                    index: bad,
                    len: n_segments,
                });
            }
            let c = t.cols();
            let d = t.data();
            let mut out = vec![0.0; n_segments * c];
            let aux = match mode {
                Aggregation::Sum | Aggregation::Mean => {
                    let mut counts = vec![0usize; n_segments];
                    for (e, &s) in segments.iter().enumerate() {
                        counts[s] += 1;
                        for j in 0..c {
                            out[s * c + j] += d[e * c + j];
                        }
                    }
                    if mode == Aggregation::Mean {
                        for (s, &n) in counts.iter().enumerate() {
                            if n > 0 {
                                for v in &mut out[s * c..(s + 1) * c] {
                                    *v /= n as f64;
                                }
                            }
                        }
                    }
                    counts
                }
                Aggregation::Max => {
                    let mut winner = vec![usize::MAX; n_segments * c];
                    for (e, &s) in segments.iter().enumerate() {
                        for j in 0..c {
                            let slot = s * c + j;
                            let v = d[e * c + j];
                            if winner[slot] == usize::MAX || v > out[slot] {
                                winner[slot] = e;
                                out[slot] = v;
                            }
                        }
                    }
                    winner
                }
            };
            let mut shape = t.shape().to_vec();
            shape[0] = n_segments;
            Ok((Tensor::new(shape, out)?, aux))
        })?;
        Ok(self.unary_node(
            value,
            Op::Segment {
                input: self.id,
                segments: segments.to_vec(),
                mode,
                aux,
            },
        ))
    }

    /// Softmax over the rows that share a segment id, independently per column.
    pub fn segment_softmax(&self, segments: &[usize], n_segments: usize) -> Result<Var<'t>> {
        let value = self.with(|t| -> Result<Tensor> {
            if segments.len() != t.rows() {
                return Err(Error::Dimension {
                    op: "segment_softmax",
                    lhs: t.shape().to_vec(),
                    rhs: vec![segments.len()],
                });
            }
            if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
                return Err(Error::Index {
                    what: "segment ids",
                    index: bad,
                    len: n_segments,
                });
            }
            let c = t.cols();
            let d = t.data();
            let mut max = vec![f64::NEG_INFINITY; n_segments * c];
            for (e, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    max[s * c + j] = max[s * c + j].max(d[e * c + j]);
                }
            }
            let mut out = vec![0.0; d.len()];
            let mut denom = vec![0.0; n_segments * c];
            for (e, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    let v = (d[e * c + j] - max[s * c + j]).exp();
                    out[e * c + j] = v;
                    denom[s * c + j] += v;
                }
            }
            for (e, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    out[e * c + j] /= denom[s * c + j];
                }
            }
            Tensor::new(t.shape().to_vec(), out)
        })?;
        Ok(self.unary_node(
            value,
            Op::SegmentSoftmax {
                input: self.id,
                segments: segments.to_vec(),
                n_segments,
            },
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let v = self.with(|t| t.sum());
        self.unary_node(Tensor::scalar(v), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let v = self.with(|t| t.sum() / t.numel() as f64);
        self.unary_node(Tensor::scalar(v), Op::Mean(self.id))
    }
}
