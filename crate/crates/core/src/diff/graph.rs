//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for each evaluation. Parameters enter as
//! borrowed leaves tagged with a slot number; [`Graph::backward`] returns
//! the gradient for every slot. Every op checks its output for NaN/Inf.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{self, Layout};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par::ExecMode;

/// Bounds applied to log-variances before exponentiation.
pub const LOGVAR_MIN: f64 = -20.0;
pub const LOGVAR_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId, Layout),
    AddRowBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Exp(NodeId),
    Log(NodeId, f64),
    Softplus(NodeId),
    SoftmaxRows(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Clamp(NodeId, f64, f64),
    Dropout(NodeId, Vec<f64>),
    SelectRows(NodeId, Vec<usize>),
    SelectCols(NodeId, Vec<usize>),
    Transpose(NodeId),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
    slot: Option<usize>,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    mode: ExecMode,
}

/// Gradients indexed by parameter slot.
#[derive(Debug)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&Tensor> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    pub fn into_slots(self) -> Vec<Option<Tensor>> {
        self.slots
    }
}

impl<'a> Default for Graph<'a> {
    fn default() -> Self {
        Self::new(ExecMode::default())
    }
}

impl<'a> Graph<'a> {
    pub fn new(mode: ExecMode) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf. Gradients for it are reported under `slot`.
    pub fn param(&mut self, slot: usize, value: &'a Tensor) -> NodeId {
        self.push_leaf(Cow::Borrowed(value), true, Some(slot))
    }

    /// A constant leaf borrowed from the caller.
    pub fn constant_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.push_leaf(Cow::Borrowed(value), false, None)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(value), false, None)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool, slot: Option<usize>) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            slot,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op, parents: &[NodeId]) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFiniteValue(name.to_string()));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
            slot: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = self.value(id);
        (v.rows(), v.cols())
    }

    fn check_same(&self, name: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::ShapeMismatch(format!(
                "{name}: {:?} vs {:?}",
                self.dims(a),
                self.dims(b)
            )));
        }
        Ok(())
    }

    fn map(&mut self, name: &str, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push(name, out, op, &[a])
    }

    fn zip(&mut self, name: &str, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        self.check_same(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, out, op, &[a, b])
    }

    fn product(&mut self, a: NodeId, b: NodeId, layout: Layout) -> Result<NodeId> {
        let (da, db) = (self.dims(a), self.dims(b));
        let (m, _, n) = linalg::product_dims(layout, da, db)
            .ok_or_else(|| Error::ShapeMismatch(format!("matmul {layout:?}: {da:?} x {db:?}")))?;
        let data = linalg::gemm(self.mode, layout, self.value(a).data(), da, self.value(b).data(), db);
        let out = Tensor::matrix(m, n, data)?;
        self.push("matmul", out, Op::Matmul(a, b, layout), &[a, b])
    }

    /// `a · b`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.product(a, b, Layout::NN)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.product(a, b, Layout::NT)
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.product(a, b, Layout::TN)
    }

    /// Adds the vector `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(a);
        if self.value(bias).len() != c {
            return Err(Error::ShapeMismatch(format!(
                "bias of length {} for {c} columns",
                self.value(bias).len()
            )));
        }
        let mut out = Tensor::zeros(&[r, c]);
        let b = self.value(bias).data();
        for i in 0..r {
            for ((o, &x), &y) in out.row_mut(i).iter_mut().zip(self.value(a).row(i)).zip(b) {
                *o = x + y;
            }
        }
        self.push("add_bias", out, Op::AddRowBias(a, bias), &[a, bias])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.map("scale", a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.map("add_scalar", a, Op::AddScalar(a), |x| x + c)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.map("exp", a, Op::Exp(a), f64::exp)
    }

    /// `ln(a + eps)`
    pub fn log(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.map("log", a, Op::Log(a, eps), |x| (x + eps).ln())
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.map("softplus", a, Op::Softplus(a), softplus)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.map("square", a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.map("clamp", a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let mut out = Tensor::zeros(&[v.rows(), v.cols()]);
        for i in 0..v.rows() {
            softmax_into(v.row(i), out.row_mut(i));
        }
        self.push("softmax", out, Op::SoftmaxRows(a), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Inverted dropout: surviving entries are scaled by `1 / (1 - rate)`.
    /// Identity when `train` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: NodeId, rate: f64, rng: &mut R, train: bool) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
            .collect();
        let v = self.value(a);
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout(a, mask), &[a])
    }

    pub fn select_rows(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        let v = self.value(a);
        if rows.iter().any(|&r| r >= v.rows()) {
            return Err(Error::ShapeMismatch("row index out of range".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * v.cols());
        for &r in rows {
            data.extend_from_slice(v.row(r));
        }
        let out = Tensor::matrix(rows.len(), v.cols(), data)?;
        self.push("select_rows", out, Op::SelectRows(a, rows.to_vec()), &[a])
    }

    pub fn select_cols(&mut self, a: NodeId, cols: &[usize]) -> Result<NodeId> {
        let v = self.value(a);
        if cols.iter().any(|&c| c >= v.cols()) {
            return Err(Error::ShapeMismatch("column index out of range".into()));
        }
        let mut data = Vec::with_capacity(cols.len() * v.rows());
        for r in 0..v.rows() {
            let row = v.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        let out = Tensor::matrix(v.rows(), cols.len(), data)?;
        self.push("select_cols", out, Op::SelectCols(a, cols.to_vec()), &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).transpose();
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    /// `mu + exp(0.5 · clamp(logvar)) ⊙ eps` with `eps ~ N(0, I)` drawn from `rng`.
    pub fn reparameterize<R: Rng + ?Sized>(&mut self, mu: NodeId, logvar: NodeId, rng: &mut R) -> Result<NodeId> {
        self.check_same("reparameterize", mu, logvar)?;
        let v = self.value(mu);
        let eps: Vec<f64> = (0..v.len()).map(|_| rng.sample(StandardNormal)).collect();
        let eps = Tensor::new(v.shape().to_vec(), eps)?;
        self.reparameterize_with(mu, logvar, eps)
    }

    /// [`Graph::reparameterize`] with a caller-supplied noise tensor.
    pub fn reparameterize_with(&mut self, mu: NodeId, logvar: NodeId, eps: Tensor) -> Result<NodeId> {
        let lv = self.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX)?;
        let half = self.scale(lv, 0.5)?;
        let std = self.exp(half)?;
        let eps = self.constant(eps);
        let noise = self.mul(std, eps)?;
        self.add(mu, noise)
    }

    /// Reverse sweep from the scalar `loss`.
    ///
    /// Returns one entry per parameter slot seen in the graph. A parameter
    /// the loss does not depend on gets a zero gradient and a warning.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            for (parent, pg) in self.local_grads(node, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }

        let n_slots = self
            .nodes
            .iter()
            .filter_map(|n| n.slot)
            .max()
            .map_or(0, |m| m + 1);
        let mut slots: Vec<Option<Tensor>> = vec![None; n_slots];
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(slot) = node.slot else { continue };
            let g = match grads.get_mut(i).and_then(Option::take) {
                Some(g) => g,
                None => {
                    log::warn!("parameter slot {slot} is disconnected from the loss; gradient is zero");
                    Tensor::zeros(node.value.shape())
                }
            };
            match &mut slots[slot] {
                Some(acc) => acc.add_assign(&g),
                s @ None => *s = Some(g),
            }
        }
        Ok(Gradients { slots })
    }

    fn local_grads(&self, node: &Node<'_>, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let out = &*node.value;
        let like = |t: &Tensor, data: Vec<f64>| Tensor::new(t.shape().to_vec(), data).expect("shape");
        let ew = |a: NodeId, f: &dyn Fn(f64, f64, f64) -> f64| {
            let x = self.value(a);
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&x, &y), &g)| f(x, y, g))
                .collect();
            (a, like(x, data))
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Matmul(a, b, layout) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (da, db) = ((va.rows(), va.cols()), (vb.rows(), vb.cols()));
                let dg = (g.rows(), g.cols());
                let m = self.mode;
                let mut out = Vec::with_capacity(2);
                if self.nodes[a.0].requires_grad {
                    let ga = match layout {
                        Layout::NN => linalg::gemm(m, Layout::NT, g.data(), dg, vb.data(), db),
                        Layout::NT => linalg::gemm(m, Layout::NN, g.data(), dg, vb.data(), db),
                        Layout::TN => linalg::gemm(m, Layout::NT, vb.data(), db, g.data(), dg),
                    };
                    out.push((*a, like(va, ga)));
                }
                if self.nodes[b.0].requires_grad {
                    let gb = match layout {
                        Layout::NN => linalg::gemm(m, Layout::TN, va.data(), da, g.data(), dg),
                        Layout::NT => linalg::gemm(m, Layout::TN, g.data(), dg, va.data(), da),
                        Layout::TN => linalg::gemm(m, Layout::NN, va.data(), da, g.data(), dg),
                    };
                    out.push((*b, like(vb, gb)));
                }
                out
            }
            Op::AddRowBias(a, b) => {
                let mut gb = vec![0.0; g.cols()];
                for r in 0..g.rows() {
                    for (acc, &x) in gb.iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                vec![(*a, g.clone()), (*b, like(self.value(*b), gb))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![
                (*a, g.clone()),
                (*b, like(g, g.data().iter().map(|x| -x).collect())),
            ],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = g.data().iter().zip(vb.data()).map(|(g, y)| g * y).collect();
                let gb = g.data().iter().zip(va.data()).map(|(g, x)| g * x).collect();
                vec![(*a, like(va, ga)), (*b, like(vb, gb))]
            }
            Op::Scale(a, c) => vec![(*a, like(g, g.data().iter().map(|x| c * x).collect()))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Exp(a) => vec![ew(*a, &|_, y, g| g * y)],
            Op::Log(a, eps) => vec![ew(*a, &|x, _, g| g / (x + eps))],
            Op::Softplus(a) => vec![ew(*a, &|x, _, g| g * sigmoid(x))],
            Op::Square(a) => vec![ew(*a, &|x, _, g| 2.0 * x * g)],
            Op::Clamp(a, lo, hi) => vec![ew(*a, &|x, _, g| if x >= *lo && x <= *hi { g } else { 0.0 })],
            Op::Sum(a) => {
                let va = self.value(*a);
                vec![(*a, Tensor::full(va.shape(), g.item()))]
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(&[out.rows(), out.cols()]);
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let inner = linalg::dot(y, gy);
                    for ((o, &yi), &gi) in ga.row_mut(r).iter_mut().zip(y).zip(gy) {
                        *o = yi * (gi - inner);
                    }
                }
                vec![(*a, like(self.value(*a), ga.into_data()))]
            }
            Op::Dropout(a, mask) => vec![(*a, like(g, g.data().iter().zip(mask).map(|(g, m)| g * m).collect()))],
            Op::SelectRows(a, rows) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(&[va.rows(), va.cols()]);
                for (i, &r) in rows.iter().enumerate() {
                    for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                vec![(*a, like(va, ga.into_data()))]
            }
            Op::SelectCols(a, cols) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(&[va.rows(), va.cols()]);
                for r in 0..va.rows() {
                    let src = g.row(r);
                    let dst = ga.row_mut(r);
                    for (j, &c) in cols.iter().enumerate() {
                        dst[c] += src[j];
                    }
                }
                vec![(*a, like(va, ga.into_data()))]
            }
            Op::Transpose(a) => {
                let ga = g.transpose();
                vec![(*a, like(self.value(*a), ga.into_data()))]
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `x` written into `out`, with max subtraction.
pub fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    softmax_into(x, &mut out);
    out
}
