//! Record-and-replay reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends one
//! node holding its output value; [`Tape::backward`] walks the nodes in reverse
//! and returns gradients for every parameter leaf reachable from the loss.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::{self, dot, sigmoid_scalar, softmax_slice, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds, used for diagnostics and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Constant,
    Param,
    MatMul,
    MatMulBt,
    MatVec,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    ScaleBy,
    Relu,
    Sigmoid,
    Log,
    Softmax,
    SumRows,
    SumAll,
    Dot,
    Concat,
    ConcatCols,
    GatherRows,
    ScatterMean,
    Index,
    RowCombine,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Constant => "constant",
            OpKind::Param => "param",
            OpKind::MatMul => "matmul",
            OpKind::MatMulBt => "matmul_bt",
            OpKind::MatVec => "matvec",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::ScaleBy => "scale_by",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Log => "log",
            OpKind::Softmax => "softmax",
            OpKind::SumRows => "sum_rows",
            OpKind::SumAll => "sum_all",
            OpKind::Dot => "dot",
            OpKind::Concat => "concat",
            OpKind::ConcatCols => "concat_cols",
            OpKind::GatherRows => "gather_rows",
            OpKind::ScatterMean => "scatter_mean",
            OpKind::Index => "index",
            OpKind::RowCombine => "row_combine",
        }
    }

    pub fn parse(name: &str) -> Option<OpKind> {
        ALL_KINDS.iter().copied().find(|k| k.name() == name)
    }
}

const ALL_KINDS: [OpKind; 24] = [
    OpKind::Constant,
    OpKind::Param,
    OpKind::MatMul,
    OpKind::MatMulBt,
    OpKind::MatVec,
    OpKind::Add,
    OpKind::Sub,
    OpKind::Mul,
    OpKind::Scale,
    OpKind::AddScalar,
    OpKind::ScaleBy,
    OpKind::Relu,
    OpKind::Sigmoid,
    OpKind::Log,
    OpKind::Softmax,
    OpKind::SumRows,
    OpKind::SumAll,
    OpKind::Dot,
    OpKind::Concat,
    OpKind::ConcatCols,
    OpKind::GatherRows,
    OpKind::ScatterMean,
    OpKind::Index,
    OpKind::RowCombine,
];

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Softmax(Var),
    SumRows(Var),
    SumAll(Var),
    Dot(Var, Var),
    Concat(Vec<Var>),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    ScatterMean { input: Var, dst: Vec<usize>, counts: Vec<usize> },
    Index(Var, usize),
    RowCombine(Var, Vec<Vec<(usize, f64)>>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Constant => OpKind::Constant,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulBt(..) => OpKind::MatMulBt,
            Op::MatVec(..) => OpKind::MatVec,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::ScaleBy(..) => OpKind::ScaleBy,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Log(_) => OpKind::Log,
            Op::Softmax(_) => OpKind::Softmax,
            Op::SumRows(_) => OpKind::SumRows,
            Op::SumAll(_) => OpKind::SumAll,
            Op::Dot(..) => OpKind::Dot,
            Op::Concat(_) => OpKind::Concat,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::ScatterMean { .. } => OpKind::ScatterMean,
            Op::Index(..) => OpKind::Index,
            Op::RowCombine(..) => OpKind::RowCombine,
        }
    }
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

struct Node<'p> {
    op: Op,
    value: Value<'p>,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to parameter leaves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(id, g)| (*id, g))
    }

    /// `grad += dloss/dparam` for every reachable parameter.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.grads {
            store.get_mut(*id).grad.add_assign(g);
        }
    }
}

/// The differentiation record for one forward pass.
///
/// Parameter values are borrowed from the [`ParamStore`] for the lifetime of
/// the tape, so no weights are copied.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    param_vars: HashMap<ParamId, Var>,
    fault: Option<OpKind>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            fault: None,
        }
    }

    /// Test hook: the backward rule of `kind` scales the gradient flowing to
    /// its first input by 1.5.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: op.kind().name(),
            });
        }
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            other => inputs(other).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Constant, value)
    }

    /// Registers a parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, store: &'p ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Borrowed(&store.get(id).value),
            needs_grad: true,
        });
        let var = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, var);
        var
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push(Op::MatMul(a, b), out)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_bt(self.value(a), self.value(b))?;
        self.push(Op::MatMulBt(a, b), out)
    }

    /// Matrix `[m x n]` times vector `[n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wt, xt) = (self.value(w), self.value(x));
        let (m, n) = wt
            .dims2()
            .ok_or_else(|| Error::dim("matvec", wt.shape(), xt.shape()))?;
        if xt.rank() != 1 || xt.len() != n {
            return Err(Error::dim("matvec", wt.shape(), xt.shape()));
        }
        let out: Vec<f64> = (0..m).map(|i| dot(wt.row(i), xt.data())).collect();
        self.push(Op::MatVec(w, x), Tensor::vector(out))
    }

    fn zip_with(&self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (at, bt) = (self.value(a), self.value(b));
        at.same_shape(bt, op)?;
        let data = at.data().iter().zip(bt.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(at.shape().to_vec(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let at = self.value(a);
        let data = at.data().iter().map(|x| f(*x)).collect();
        Tensor::new(at.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), out)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.map(a, |x| x * c);
        self.push(Op::Scale(a, c), out)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.map(a, |x| x + c);
        self.push(Op::AddScalar(a), out)
    }

    /// Multiplies every element of `x` by the one-element node `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let factor = self
            .value(s)
            .item()
            .ok_or_else(|| Error::dim("scale_by", self.shape(x), self.shape(s)))?;
        let out = self.map(x, |v| v * factor);
        self.push(Op::ScaleBy(x, s), out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid_scalar);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(Error::domain("log", "non-positive input"));
        }
        let out = self.map(a, f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let at = self.value(a);
        if at.rank() != 1 {
            return Err(Error::dim("softmax", at.shape(), &[at.len()]));
        }
        let out = Tensor::vector(softmax_slice(at.data())?);
        self.push(Op::Softmax(a), out)
    }

    /// Column sums of `[n x d]`, giving `[d]`; zeros when `n == 0`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let at = self.value(a);
        let (n, d) = at
            .dims2()
            .ok_or_else(|| Error::dim("sum_rows", at.shape(), &[0, 0]))?;
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(at.row(i)) {
                *o += v;
            }
        }
        self.push(Op::SumRows(a), Tensor::vector(out))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).sum();
        self.push(Op::SumAll(a), Tensor::scalar(total))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.rank() != 1 {
            return Err(Error::dim("dot", at.shape(), bt.shape()));
        }
        at.same_shape(bt, "dot")?;
        let out = dot(at.data(), bt.data());
        self.push(Op::Dot(a, b), Tensor::scalar(out))
    }

    /// Flattens and joins the inputs into one rank-1 tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(out))
    }

    /// Joins `[m x p]` and `[m x q]` into `[m x (p + q)]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        let (Some((m, p)), Some((m2, q))) = (at.dims2(), bt.dims2()) else {
            return Err(Error::dim("concat_cols", at.shape(), bt.shape()));
        };
        if m != m2 {
            return Err(Error::dim("concat_cols", at.shape(), bt.shape()));
        }
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(at.row(i));
            out.extend_from_slice(bt.row(i));
        }
        let out = Tensor::matrix(m, p + q, out)?;
        self.push(Op::ConcatCols(a, b), out)
    }

    /// Selects rows of `[n x d]` by index, giving `[idx.len() x d]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let at = self.value(a);
        let (n, d) = at
            .dims2()
            .ok_or_else(|| Error::dim("gather_rows", at.shape(), &[idx.len()]))?;
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= n {
                return Err(Error::domain("gather_rows", format!("row {i} of {n}")));
            }
            out.extend_from_slice(at.row(i));
        }
        let out = Tensor::matrix(idx.len(), d, out)?;
        self.push(Op::GatherRows(a, idx.to_vec()), out)
    }

    /// Row `i` of the `[n x d]` output is the mean of the input rows `e` with
    /// `dst[e] == i`; rows with no contributors are zero.
    pub fn scatter_mean(&mut self, a: Var, dst: &[usize], n: usize) -> Result<Var> {
        let at = self.value(a);
        let (m, d) = at
            .dims2()
            .ok_or_else(|| Error::dim("scatter_mean", at.shape(), &[dst.len()]))?;
        if m != dst.len() {
            return Err(Error::dim("scatter_mean", at.shape(), &[dst.len()]));
        }
        let mut counts = vec![0usize; n];
        for &i in dst {
            if i >= n {
                return Err(Error::domain("scatter_mean", format!("row {i} of {n}")));
            }
            counts[i] += 1;
        }
        let mut out = vec![0.0; n * d];
        for (e, &i) in dst.iter().enumerate() {
            for (o, v) in out[i * d..(i + 1) * d].iter_mut().zip(at.row(e)) {
                *o += v;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > 1 {
                let inv = c as f64;
                for o in &mut out[i * d..(i + 1) * d] {
                    *o /= inv;
                }
            }
        }
        let out = Tensor::matrix(n, d, out)?;
        self.push(
            Op::ScatterMean {
                input: a,
                dst: dst.to_vec(),
                counts,
            },
            out,
        )
    }

    /// Extracts element `i` of a rank-1 tensor as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let at = self.value(a);
        if at.rank() != 1 || i >= at.len() {
            return Err(Error::dim("index", at.shape(), &[i]));
        }
        let v = at.data()[i];
        self.push(Op::Index(a, i), Tensor::scalar(v))
    }

    /// Each output row is a weighted sum of rows of `table [v x d]`.
    pub fn row_combine(&mut self, table: Var, rows: Vec<Vec<(usize, f64)>>) -> Result<Var> {
        let tt = self.value(table);
        let (v, d) = tt
            .dims2()
            .ok_or_else(|| Error::dim("row_combine", tt.shape(), &[rows.len()]))?;
        let mut out = vec![0.0; rows.len() * d];
        for (r, weights) in rows.iter().enumerate() {
            let dst = &mut out[r * d..(r + 1) * d];
            for &(idx, w) in weights {
                if idx >= v {
                    return Err(Error::domain("row_combine", format!("row {idx} of {v}")));
                }
                for (o, x) in dst.iter_mut().zip(tt.row(idx)) {
                    *o += w * x;
                }
            }
        }
        let out = Tensor::matrix(rows.len(), d, out)?;
        self.push(Op::RowCombine(table, rows), out)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// The tape is not consumed; replaying twice yields the same gradients,
    /// which double when both results are accumulated.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::domain(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if let Op::Param(id) = node.op {
                out.grads.insert(id, g);
                continue;
            }
            let mut contribs = self.vjp(idx, &g)?;
            if self.fault == Some(node.op.kind()) {
                if let Some((_, first)) = contribs.first_mut() {
                    first.scale_in_place(1.5);
                }
            }
            for (var, contrib) in contribs {
                if !self.nodes[var.0].needs_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
        }
        Ok(out)
    }

    /// Vector-Jacobian products of node `idx` for upstream gradient `g`.
    fn vjp(&self, idx: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let out_val = self.value(Var(idx));
        let needs = |v: &Var| self.nodes[v.0].needs_grad;
        let res = match &self.nodes[idx].op {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) => {
                let mut r = Vec::new();
                if needs(a) {
                    r.push((*a, tensor::matmul_bt(g, self.value(*b))?));
                }
                if needs(b) {
                    r.push((*b, tensor::matmul_at(self.value(*a), g)?));
                }
                r
            }
            Op::MatMulBt(a, b) => {
                let mut r = Vec::new();
                if needs(a) {
                    r.push((*a, tensor::matmul(g, self.value(*b))?));
                }
                if needs(b) {
                    r.push((*b, tensor::matmul_at(g, self.value(*a))?));
                }
                r
            }
            Op::MatVec(w, x) => {
                let (wt, xt) = (self.value(*w), self.value(*x));
                let (m, n) = wt.dims2().expect("checked in forward");
                let mut r = Vec::new();
                if needs(w) {
                    let mut dw = Vec::with_capacity(m * n);
                    for gi in g.data() {
                        dw.extend(xt.data().iter().map(|xv| gi * xv));
                    }
                    r.push((*w, Tensor::matrix(m, n, dw)?));
                }
                if needs(x) {
                    let mut dx = vec![0.0; n];
                    for (i, gi) in g.data().iter().enumerate() {
                        for (d, wv) in dx.iter_mut().zip(wt.row(i)) {
                            *d += gi * wv;
                        }
                    }
                    r.push((*x, Tensor::vector(dx)));
                }
                r
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => {
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                vec![(*a, g.clone()), (*b, neg)]
            }
            Op::Mul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                vec![(*a, elementwise(g, bt, |x, y| x * y)), (*b, elementwise(g, at, |x, y| x * y))]
            }
            Op::Scale(a, c) => {
                let mut s = g.clone();
                s.scale_in_place(*c);
                vec![(*a, s)]
            }
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::ScaleBy(x, s) => {
                let xt = self.value(*x);
                let factor = self.value(*s).item().expect("checked in forward");
                let mut dx = g.clone();
                dx.scale_in_place(factor);
                let ds = dot(g.data(), xt.data());
                let ds = Tensor::new(self.shape(*s).to_vec(), vec![ds])?;
                vec![(*x, dx), (*s, ds)]
            }
            Op::Relu(a) => vec![(*a, elementwise(g, out_val, |gv, y| if y > 0.0 { gv } else { 0.0 }))],
            Op::Sigmoid(a) => vec![(*a, elementwise(g, out_val, |gv, y| gv * y * (1.0 - y)))],
            Op::Log(a) => vec![(*a, elementwise(g, self.value(*a), |gv, x| gv / x))],
            Op::Softmax(a) => {
                let gy = dot(g.data(), out_val.data());
                vec![(*a, elementwise(g, out_val, |gv, y| y * (gv - gy)))]
            }
            Op::SumRows(a) => {
                let (n, d) = self.value(*a).dims2().expect("checked in forward");
                let mut da = Vec::with_capacity(n * d);
                for _ in 0..n {
                    da.extend_from_slice(g.data());
                }
                vec![(*a, Tensor::matrix(n, d, da)?)]
            }
            Op::SumAll(a) => {
                let gv = g.item().expect("scalar");
                vec![(*a, Tensor::full(self.shape(*a), gv))]
            }
            Op::Dot(a, b) => {
                let gv = g.item().expect("scalar");
                let mut da = self.value(*b).clone();
                da.scale_in_place(gv);
                let mut db = self.value(*a).clone();
                db.scale_in_place(gv);
                vec![(*a, da), (*b, db)]
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                let mut r = Vec::with_capacity(parts.len());
                for p in parts {
                    let shape = self.shape(*p).to_vec();
                    let len: usize = shape.iter().product();
                    r.push((*p, Tensor::new(shape, g.data()[offset..offset + len].to_vec())?));
                    offset += len;
                }
                r
            }
            Op::ConcatCols(a, b) => {
                let (m, p) = self.value(*a).dims2().expect("checked in forward");
                let q = self.value(*b).dims2().expect("checked in forward").1;
                let mut da = Vec::with_capacity(m * p);
                let mut db = Vec::with_capacity(m * q);
                for i in 0..m {
                    let row = g.row(i);
                    da.extend_from_slice(&row[..p]);
                    db.extend_from_slice(&row[p..]);
                }
                vec![(*a, Tensor::matrix(m, p, da)?), (*b, Tensor::matrix(m, q, db)?)]
            }
            Op::GatherRows(a, idx) => {
                let (n, d) = self.value(*a).dims2().expect("checked in forward");
                let mut da = vec![0.0; n * d];
                for (r, &i) in idx.iter().enumerate() {
                    for (o, gv) in da[i * d..(i + 1) * d].iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
                vec![(*a, Tensor::matrix(n, d, da)?)]
            }
            Op::ScatterMean { input, dst, counts } => {
                let (m, d) = self.value(*input).dims2().expect("checked in forward");
                let mut da = Vec::with_capacity(m * d);
                for &i in dst {
                    let inv = 1.0 / counts[i] as f64;
                    da.extend(g.row(i).iter().map(|gv| gv * inv));
                }
                vec![(*input, Tensor::matrix(m, d, da)?)]
            }
            Op::Index(a, i) => {
                let mut da = Tensor::zeros(self.shape(*a));
                da.data_mut()[*i] = g.item().expect("scalar");
                vec![(*a, da)]
            }
            Op::RowCombine(table, rows) => {
                let (v, d) = self.value(*table).dims2().expect("checked in forward");
                let mut dt = vec![0.0; v * d];
                for (r, weights) in rows.iter().enumerate() {
                    for &(idx, w) in weights {
                        for (o, gv) in dt[idx * d..(idx + 1) * d].iter_mut().zip(g.row(r)) {
                            *o += w * gv;
                        }
                    }
                }
                vec![(*table, Tensor::matrix(v, d, dt)?)]
            }
        };
        Ok(res)
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Constant | Op::Param(_) => Vec::new(),
        Op::MatMul(a, b)
        | Op::MatMulBt(a, b)
        | Op::MatVec(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::ScaleBy(a, b)
        | Op::Dot(a, b)
        | Op::ConcatCols(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::Log(a)
        | Op::Softmax(a)
        | Op::SumRows(a)
        | Op::SumAll(a)
        | Op::GatherRows(a, _)
        | Op::Index(a, _)
        | Op::RowCombine(a, _) => vec![*a],
        Op::ScatterMean { input, .. } => vec![*input],
        Op::Concat(parts) => parts.clone(),
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}
