//! Reverse-mode differentiation on a linear tape.
//!
//! Every operation evaluates eagerly, appends a node holding its value and the
//! ids of its operands, and knows its own adjoint rule. [`Tape::backward`]
//! walks the nodes in reverse creation order, which is a valid topological
//! order because operands always precede their results.
//!
//! A tape and its [`Var`] handles live on one thread. Parameters from a
//! [`ParamStore`] are bound once per tape with [`Tape::param`]; after the
//! backward pass [`Gradients::accumulate_into`] adds their adjoints to the
//! store.

use std::cell::{Ref, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tensor::{DiffTensor, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Maximum(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Exp(usize),
    Tanh(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    LeakyRelu(usize, f64),
    Sin(usize),
    Cos(usize),
    Abs(usize),
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    BlockLinear {
        w: usize,
        x: usize,
    },
    Outer(usize, usize),
    Dot(usize, usize),
    Broadcast(usize),
    Concat(Vec<usize>),
    Slice {
        x: usize,
        start: usize,
    },
    Transpose(usize),
    Softmax(usize),
    Sum(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Records operations for a single forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bound: RefCell<Vec<(u64, ParamId, usize)>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
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

    /// Branch taken by every LeakyReLU, abs and max element recorded so far.
    /// Two evaluations of the same graph with equal patterns lie on the same
    /// smooth piece.
    pub fn switch_pattern(&self) -> Vec<bool> {
        let nodes = self.nodes.borrow();
        let mut pattern = Vec::new();
        for node in nodes.iter() {
            match node.op {
                Op::LeakyRelu(x, _) | Op::Abs(x) => pattern.extend(nodes[x].value.iter().map(|v| *v > 0.0)),
                Op::Maximum(a, b) => pattern.extend(nodes[a].value.iter().zip(&nodes[b].value).map(|(x, y)| x >= y)),
                _ => {}
            }
        }
        pattern
    }

    fn push(&self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var<'_> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { shape, value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a leaf holding a copy of `tensor`.
    pub fn leaf(&self, tensor: &DiffTensor) -> Var<'_> {
        self.push(tensor.shape().to_vec(), tensor.values().to_vec(), Op::Leaf)
    }

    pub fn constant(&self, shape: &[usize], values: Vec<f64>) -> Var<'_> {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(shape.to_vec(), values, Op::Leaf)
    }

    pub fn vector(&self, values: Vec<f64>) -> Var<'_> {
        let n = values.len();
        self.push(vec![n], values, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.push(vec![1], vec![value], Op::Leaf)
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'_> {
        let n = shape.iter().product();
        self.push(shape.to_vec(), vec![0.0; n], Op::Leaf)
    }

    /// Binds a stored parameter to this tape, once per tape.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        let key = store.key();
        if let Some(&(_, _, node)) = self
            .bound
            .borrow()
            .iter()
            .find(|(k, p, _)| *k == key && *p == id)
        {
            return Var {
                tape: self,
                id: node,
            };
        }
        let v = self.leaf(store.get(id));
        self.bound.borrow_mut().push((key, id, v.id));
        v
    }

    /// Reverse sweep from a scalar result.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, output.tape), "var from another tape");
        let nodes = self.nodes.borrow();
        if nodes[output.id].value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: nodes[output.id].shape.clone(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.id + 1];
        grads[output.id] = Some(vec![1.0]);
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        grads.resize(nodes.len(), None);
        Ok(Gradients {
            grads,
            bound: self.bound.borrow().clone(),
        })
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: usize, len: usize) -> &mut [f64] {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

fn backprop_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out = &node.value;
    let val = |i: usize| &nodes[i].value;
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for (s, gi) in acc(grads, a, g.len()).iter_mut().zip(g) {
                *s += gi;
            }
            for (s, gi) in acc(grads, b, g.len()).iter_mut().zip(g) {
                *s += gi;
            }
        }
        Op::Sub(a, b) => {
            for (s, gi) in acc(grads, a, g.len()).iter_mut().zip(g) {
                *s += gi;
            }
            for (s, gi) in acc(grads, b, g.len()).iter_mut().zip(g) {
                *s -= gi;
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(a).clone(), val(b).clone());
            for ((s, gi), y) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&vb) {
                *s += gi * y;
            }
            for ((s, gi), x) in acc(grads, b, g.len()).iter_mut().zip(g).zip(&va) {
                *s += gi * x;
            }
        }
        Op::Div(a, b) => {
            let vb = val(b).clone();
            for ((s, gi), y) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&vb) {
                *s += gi / y;
            }
            for (((s, gi), y), q) in acc(grads, b, g.len())
                .iter_mut()
                .zip(g)
                .zip(&vb)
                .zip(out)
            {
                *s -= gi * q / y;
            }
        }
        Op::Maximum(a, b) => {
            let (va, vb) = (val(a).clone(), val(b).clone());
            let n = g.len();
            {
                let ga = acc(grads, a, n);
                for i in 0..n {
                    if va[i] >= vb[i] {
                        ga[i] += g[i];
                    }
                }
            }
            let gb = acc(grads, b, n);
            for i in 0..n {
                if va[i] < vb[i] {
                    gb[i] += g[i];
                }
            }
        }
        Op::Scale(a, c) => {
            for (s, gi) in acc(grads, a, g.len()).iter_mut().zip(g) {
                *s += c * gi;
            }
        }
        Op::Offset(a) => {
            for (s, gi) in acc(grads, a, g.len()).iter_mut().zip(g) {
                *s += gi;
            }
        }
        Op::Exp(a) => {
            for ((s, gi), y) in acc(grads, a, g.len()).iter_mut().zip(g).zip(out) {
                *s += gi * y;
            }
        }
        Op::Tanh(a) => {
            for ((s, gi), y) in acc(grads, a, g.len()).iter_mut().zip(g).zip(out) {
                *s += gi * (1.0 - y * y);
            }
        }
        Op::Sigmoid(a) => {
            for ((s, gi), y) in acc(grads, a, g.len()).iter_mut().zip(g).zip(out) {
                *s += gi * y * (1.0 - y);
            }
        }
        Op::LogSigmoid(a) => {
            let va = val(a).clone();
            for ((s, gi), x) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&va) {
                *s += gi * sigmoid(-x);
            }
        }
        Op::LeakyRelu(a, slope) => {
            let va = val(a).clone();
            for ((s, gi), x) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&va) {
                *s += if *x > 0.0 { *gi } else { gi * slope };
            }
        }
        Op::Sin(a) => {
            let va = val(a).clone();
            for ((s, gi), x) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&va) {
                *s += gi * x.cos();
            }
        }
        Op::Cos(a) => {
            let va = val(a).clone();
            for ((s, gi), x) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&va) {
                *s -= gi * x.sin();
            }
        }
        Op::Abs(a) => {
            let va = val(a).clone();
            for ((s, gi), x) in acc(grads, a, g.len()).iter_mut().zip(g).zip(&va) {
                if *x > 0.0 {
                    *s += gi;
                } else if *x < 0.0 {
                    *s -= gi;
                }
            }
        }
        Op::Linear { x, w, b } => {
            let wshape = &nodes[w].shape;
            let (n_out, n_in) = (wshape[0], wshape[1]);
            let rows = nodes[x].value.len() / n_in;
            let (vx, vw) = (val(x).clone(), val(w).clone());
            {
                let gx = acc(grads, x, vx.len());
                for r in 0..rows {
                    let grow = &g[r * n_out..(r + 1) * n_out];
                    let gxr = &mut gx[r * n_in..(r + 1) * n_in];
                    for (o, go) in grow.iter().enumerate() {
                        if *go == 0.0 {
                            continue;
                        }
                        let wrow = &vw[o * n_in..(o + 1) * n_in];
                        for (s, wv) in gxr.iter_mut().zip(wrow) {
                            *s += go * wv;
                        }
                    }
                }
            }
            {
                let gw = acc(grads, w, vw.len());
                for r in 0..rows {
                    let grow = &g[r * n_out..(r + 1) * n_out];
                    let xr = &vx[r * n_in..(r + 1) * n_in];
                    for (o, go) in grow.iter().enumerate() {
                        if *go == 0.0 {
                            continue;
                        }
                        let gwrow = &mut gw[o * n_in..(o + 1) * n_in];
                        for (s, xv) in gwrow.iter_mut().zip(xr) {
                            *s += go * xv;
                        }
                    }
                }
            }
            if let Some(b) = b {
                let gb = acc(grads, b, n_out);
                for r in 0..rows {
                    for (s, gi) in gb.iter_mut().zip(&g[r * n_out..(r + 1) * n_out]) {
                        *s += gi;
                    }
                }
            }
        }
        Op::BlockLinear { w, x } => {
            let ws = &nodes[w].shape;
            let (heads, bs) = (ws[0], ws[1]);
            let (vx, vw) = (val(x).clone(), val(w).clone());
            {
                let gx = acc(grads, x, vx.len());
                for h in 0..heads {
                    for a in 0..bs {
                        let go = g[h * bs + a];
                        let wrow = &vw[(h * bs + a) * bs..(h * bs + a + 1) * bs];
                        for (bi, wv) in wrow.iter().enumerate() {
                            gx[h * bs + bi] += go * wv;
                        }
                    }
                }
            }
            let gw = acc(grads, w, vw.len());
            for h in 0..heads {
                for a in 0..bs {
                    let go = g[h * bs + a];
                    let base = (h * bs + a) * bs;
                    for bi in 0..bs {
                        gw[base + bi] += go * vx[h * bs + bi];
                    }
                }
            }
        }
        Op::Outer(a, b) => {
            let (va, vb) = (val(a).clone(), val(b).clone());
            let m = vb.len();
            {
                let ga = acc(grads, a, va.len());
                for (i, s) in ga.iter_mut().enumerate() {
                    *s += g[i * m..(i + 1) * m]
                        .iter()
                        .zip(&vb)
                        .map(|(gi, y)| gi * y)
                        .sum::<f64>();
                }
            }
            let gb = acc(grads, b, m);
            for (i, x) in va.iter().enumerate() {
                for (s, gi) in gb.iter_mut().zip(&g[i * m..(i + 1) * m]) {
                    *s += gi * x;
                }
            }
        }
        Op::Dot(a, b) => {
            let (va, vb) = (val(a).clone(), val(b).clone());
            let g0 = g[0];
            for (s, y) in acc(grads, a, va.len()).iter_mut().zip(&vb) {
                *s += g0 * y;
            }
            for (s, x) in acc(grads, b, vb.len()).iter_mut().zip(&va) {
                *s += g0 * x;
            }
        }
        Op::Broadcast(a) => {
            let total: f64 = g.iter().sum();
            acc(grads, a, 1)[0] += total;
        }
        Op::Concat(ref parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = nodes[p].value.len();
                for (s, gi) in acc(grads, p, n).iter_mut().zip(&g[offset..offset + n]) {
                    *s += gi;
                }
                offset += n;
            }
        }
        Op::Slice { x, start } => {
            let n = nodes[x].value.len();
            for (s, gi) in acc(grads, x, n)[start..start + g.len()].iter_mut().zip(g) {
                *s += gi;
            }
        }
        Op::Transpose(a) => {
            let s = &nodes[a].shape;
            let (r, c) = (s[0], s[1]);
            let ga = acc(grads, a, r * c);
            for i in 0..r {
                for j in 0..c {
                    ga[i * c + j] += g[j * r + i];
                }
            }
        }
        Op::Softmax(a) => {
            let dot: f64 = g.iter().zip(out).map(|(gi, y)| gi * y).sum();
            for ((s, gi), y) in acc(grads, a, g.len()).iter_mut().zip(g).zip(out) {
                *s += y * (gi - dot);
            }
        }
        Op::Sum(a) => {
            let n = nodes[a].value.len();
            for s in acc(grads, a, n).iter_mut() {
                *s += g[0];
            }
        }
        Op::Reshape(a) => {
            for (s, gi) in acc(grads, a, g.len()).iter_mut().zip(g) {
                *s += gi;
            }
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    bound: Vec<(u64, ParamId, usize)>,
}

impl Gradients {
    /// Adjoint of `var`; `None` when the output does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Adjoint of `var`, zero-filled when unreachable.
    pub fn wrt(&self, var: Var<'_>) -> Vec<f64> {
        self.get(var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; var.len()])
    }

    /// Adds parameter adjoints into the store's grad slots. Every parameter
    /// ends up with a populated (possibly zero) gradient.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for id in store.ids().collect::<Vec<_>>() {
            let t = store.get_mut(id);
            if t.grad().is_none() {
                t.zero_grad();
            }
        }
        let key = store.key();
        for &(_, pid, node) in self.bound.iter().filter(|b| b.0 == key) {
            if let Some(g) = self.grads.get(node).and_then(|g| g.as_deref()) {
                if store.get(pid).requires_grad() {
                    store.get_mut(pid).accumulate_grad(g);
                }
            }
        }
    }

    /// Parameter adjoints flattened in store order.
    pub fn flat_param_grads(&self, store: &ParamStore) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(store.len());
        let mut total = 0;
        for (_, t) in store.iter() {
            offsets.push(total);
            total += t.len();
        }
        let mut out = vec![0.0; total];
        for &(_, pid, node) in self.bound.iter().filter(|b| b.0 == store.key()) {
            if let Some(g) = self.grads.get(node).and_then(|g| g.as_deref()) {
                let off = offsets[pid.index()];
                for (s, v) in out[off..off + g.len()].iter_mut().zip(g) {
                    *s += v;
                }
            }
        }
        out
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    fn node(&self) -> Ref<'_, Node> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.node().value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self) -> Vec<f64> {
        self.node().value.clone()
    }

    pub fn scalar(&self) -> f64 {
        let n = self.node();
        assert_eq!(n.value.len(), 1, "scalar() on non-scalar var");
        n.value[0]
    }

    pub fn at(&self, i: usize) -> f64 {
        self.node().value[i]
    }

    pub fn is_finite(&self) -> bool {
        self.node().value.iter().all(|v| v.is_finite())
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Self {
        let (shape, value) = {
            let n = self.node();
            (n.shape.clone(), n.value.iter().map(|&x| f(x)).collect())
        };
        self.tape.push(shape, value, op)
    }

    fn binary(
        self,
        other: Self,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let (shape, value) = {
            let a = self.node();
            let b = other.node();
            if a.value.len() != b.value.len() {
                return Err(shape_err(name, &a.shape, &b.shape));
            }
            (
                a.shape.clone(),
                a.value.iter().zip(&b.value).map(|(&x, &y)| f(x, y)).collect(),
            )
        };
        Ok(self.tape.push(shape, value, op))
    }

    pub fn try_add(self, other: Self) -> Result<Self> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn try_sub(self, other: Self) -> Result<Self> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn try_mul(self, other: Self) -> Result<Self> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn try_div(self, other: Self) -> Result<Self> {
        self.binary(other, "div", Op::Div(self.id, other.id), |a, b| a / b)
    }

    /// Elementwise maximum; ties send the adjoint to `self`.
    pub fn maximum(self, other: Self) -> Result<Self> {
        self.binary(other, "maximum", Op::Maximum(self.id, other.id), f64::max)
    }

    pub fn scale(self, c: f64) -> Self {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    pub fn offset(self, c: f64) -> Self {
        self.unary(Op::Offset(self.id), |x| x + c)
    }

    pub fn exp(self) -> Self {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn tanh(self) -> Self {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Self {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    /// `ln σ(x)`, evaluated without overflow.
    pub fn log_sigmoid(self) -> Self {
        self.unary(Op::LogSigmoid(self.id), log_sigmoid)
    }

    pub fn leaky_relu(self, negative_slope: f64) -> Self {
        self.unary(Op::LeakyRelu(self.id, negative_slope), |x| {
            if x > 0.0 {
                x
            } else {
                negative_slope * x
            }
        })
    }

    pub fn sin(self) -> Self {
        self.unary(Op::Sin(self.id), f64::sin)
    }

    pub fn cos(self) -> Self {
        self.unary(Op::Cos(self.id), f64::cos)
    }

    pub fn abs(self) -> Self {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    /// `W·x + b` for `x` of shape `[in]` or a row batch `[n, in]`.
    pub fn linear(self, w: Var<'t>, b: Option<Var<'t>>) -> Result<Self> {
        let (shape, value) = {
            let xn = self.node();
            let wn = w.node();
            if wn.shape.len() != 2 {
                return Err(shape_err("linear", &xn.shape, &wn.shape));
            }
            let (n_out, n_in) = (wn.shape[0], wn.shape[1]);
            let rows = match xn.shape.as_slice() {
                [i] if *i == n_in => 1,
                [r, i] if *i == n_in => *r,
                _ => return Err(shape_err("linear", &xn.shape, &wn.shape)),
            };
            let bias = match b {
                Some(b) => {
                    let bn = b.node();
                    if bn.value.len() != n_out {
                        return Err(shape_err("linear bias", &wn.shape, &bn.shape));
                    }
                    Some(bn.value.clone())
                }
                None => None,
            };
            let mut out = vec![0.0; rows * n_out];
            for r in 0..rows {
                let xr = &xn.value[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let wrow = &wn.value[o * n_in..(o + 1) * n_in];
                    let mut s = bias.as_ref().map_or(0.0, |b| b[o]);
                    for (wv, xv) in wrow.iter().zip(xr) {
                        s += wv * xv;
                    }
                    out[r * n_out + o] = s;
                }
            }
            let shape = if xn.shape.len() == 1 {
                vec![n_out]
            } else {
                vec![rows, n_out]
            };
            (shape, out)
        };
        Ok(self.tape.push(
            shape,
            value,
            Op::Linear {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
            },
        ))
    }

    /// Block-diagonal matrix-vector product; `w` has shape `[heads, bs, bs]`.
    pub fn block_linear(self, w: Var<'t>) -> Result<Self> {
        let value = {
            let xn = self.node();
            let wn = w.node();
            let ok = wn.shape.len() == 3
                && wn.shape[1] == wn.shape[2]
                && xn.value.len() == wn.shape[0] * wn.shape[1];
            if !ok {
                return Err(shape_err("block_linear", &xn.shape, &wn.shape));
            }
            let (heads, bs) = (wn.shape[0], wn.shape[1]);
            let mut out = vec![0.0; heads * bs];
            for h in 0..heads {
                for a in 0..bs {
                    let base = (h * bs + a) * bs;
                    out[h * bs + a] = (0..bs)
                        .map(|bi| wn.value[base + bi] * xn.value[h * bs + bi])
                        .sum();
                }
            }
            out
        };
        let n = value.len();
        Ok(self
            .tape
            .push(vec![n], value, Op::BlockLinear { w: w.id, x: self.id }))
    }

    /// `self · otherᵀ` for two vectors, shape `[len(self), len(other)]`.
    pub fn outer(self, other: Self) -> Self {
        let (shape, value) = {
            let a = self.node();
            let b = other.node();
            let mut v = Vec::with_capacity(a.value.len() * b.value.len());
            for x in &a.value {
                v.extend(b.value.iter().map(|y| x * y));
            }
            (vec![a.value.len(), b.value.len()], v)
        };
        self.tape.push(shape, value, Op::Outer(self.id, other.id))
    }

    pub fn dot(self, other: Self) -> Result<Self> {
        let value = {
            let a = self.node();
            let b = other.node();
            if a.value.len() != b.value.len() {
                return Err(shape_err("dot", &a.shape, &b.shape));
            }
            a.value.iter().zip(&b.value).map(|(x, y)| x * y).sum()
        };
        Ok(self.tape.push(vec![1], vec![value], Op::Dot(self.id, other.id)))
    }

    /// Repeats a single-element var into `shape`.
    pub fn broadcast(self, shape: &[usize]) -> Self {
        let v = self.scalar();
        let n = shape.iter().product();
        self.tape.push(shape.to_vec(), vec![v; n], Op::Broadcast(self.id))
    }

    /// Flat concatenation into a vector.
    pub fn concat(parts: &[Var<'t>]) -> Self {
        assert!(!parts.is_empty(), "concat of nothing");
        let tape = parts[0].tape;
        let value: Vec<f64> = {
            let nodes = tape.nodes.borrow();
            parts
                .iter()
                .flat_map(|p| nodes[p.id].value.iter().copied())
                .collect()
        };
        let n = value.len();
        tape.push(vec![n], value, Op::Concat(parts.iter().map(|p| p.id).collect()))
    }

    /// Stacks equally sized vectors into a `[rows, cols]` matrix.
    pub fn stack_rows(rows: &[Var<'t>]) -> Result<Self> {
        let cols = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(shape_err("stack_rows", &rows[0].shape(), &bad.shape()));
        }
        Var::concat(rows).reshape(&[rows.len(), cols])
    }

    /// Flat slice `[start, start + len)` as a vector.
    pub fn slice(self, start: usize, len: usize) -> Result<Self> {
        let value = {
            let n = self.node();
            if start + len > n.value.len() || len == 0 {
                return Err(shape_err("slice", &n.shape, &[start, len]));
            }
            n.value[start..start + len].to_vec()
        };
        Ok(self
            .tape
            .push(vec![len], value, Op::Slice { x: self.id, start }))
    }

    /// Row `i` of a matrix.
    pub fn row(self, i: usize) -> Result<Self> {
        let shape = self.shape();
        if shape.len() != 2 || i >= shape[0] {
            return Err(shape_err("row", &shape, &[i]));
        }
        self.slice(i * shape[1], shape[1])
    }

    pub fn transpose(self) -> Result<Self> {
        let (shape, value) = {
            let n = self.node();
            if n.shape.len() != 2 {
                return Err(shape_err("transpose", &n.shape, &[2]));
            }
            let (r, c) = (n.shape[0], n.shape[1]);
            let mut v = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    v[j * r + i] = n.value[i * c + j];
                }
            }
            (vec![c, r], v)
        };
        Ok(self.tape.push(shape, value, Op::Transpose(self.id)))
    }

    /// Softmax over all elements, shifted by the maximum.
    pub fn softmax(self) -> Self {
        let (shape, value) = {
            let n = self.node();
            let m = n.value.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = n.value.iter().map(|x| (x - m).exp()).collect();
            let s: f64 = e.iter().sum();
            (n.shape.clone(), e.into_iter().map(|x| x / s).collect())
        };
        self.tape.push(shape, value, Op::Softmax(self.id))
    }

    pub fn sum(self) -> Self {
        let s = self.node().value.iter().sum();
        self.tape.push(vec![1], vec![s], Op::Sum(self.id))
    }

    pub fn mean(self) -> Self {
        let n = self.len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let value = {
            let n = self.node();
            if shape.iter().product::<usize>() != n.value.len() {
                return Err(shape_err("reshape", &n.shape, shape));
            }
            n.value.clone()
        };
        Ok(self.tape.push(shape.to_vec(), value, Op::Reshape(self.id)))
    }

    pub fn square(self) -> Self {
        self * self
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.try_add(rhs).expect("add: shape mismatch")
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.try_sub(rhs).expect("sub: shape mismatch")
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.try_mul(rhs).expect("mul: shape mismatch")
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        self.try_div(rhs).expect("div: shape mismatch")
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.offset(rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

/// Scalar arithmetic shared by plain `f64` code and recorded [`Var`]s, so
/// closed-form updates can be written once and evaluated either way.
pub trait Real: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn mul_f(self, c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn value(&self) -> f64;
}

impl Real for f64 {
    fn mul_f(self, c: f64) -> Self {
        self * c
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn value(&self) -> f64 {
        *self
    }
}

impl Real for Var<'_> {
    fn mul_f(self, c: f64) -> Self {
        self.scale(c)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn value(&self) -> f64 {
        self.scalar()
    }
}
