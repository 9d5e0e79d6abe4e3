//! Minimal define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive application in execution order. Node
//! values live in one contiguous arena, so building a graph for a sequence
//! costs one allocation amortized over the whole unroll. Tapes are rebuilt
//! (or [`Tape::clear`]ed) for every forward pass.
//!
//! Subgradient conventions: `relu'(0) = 0`, and `min(a, b)` with `a == b`
//! routes the whole gradient to `a`.

use std::fmt;

use thiserror::Error;

/// Shape of a tensor. Only the ranks the model equations need are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    /// Number of scalar entries.
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Scalar => vec![],
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Shape> {
        match *dims {
            [] => Some(Shape::Scalar),
            [n] => Some(Shape::Vector(n)),
            [r, c] => Some(Shape::Matrix(r, c)),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Scalar => write!(f, "[]"),
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}, {c}]"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: unsupported operand shape {shape}")]
    BadOperand { op: &'static str, shape: Shape },
    #[error("value count {got} does not match shape {shape}")]
    ValueCount { shape: Shape, got: usize },
    #[error("backward: loss must be a scalar, got shape {0}")]
    NonScalarLoss(Shape),
    #[error("{op}: index {index} out of range for shape {shape}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        shape: Shape,
    },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Primitive operation kinds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Leaf,
    /// Matrix `[r, c]` times vector `[c]`.
    MatVec(Var, Var),
    /// Inner product of two equal-length vectors.
    Dot(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    /// Scalar times tensor.
    Scale(Var, Var),
    Concat(Var, Var),
    /// Contiguous sub-vector starting at the given offset.
    Slice(Var, usize),
    /// Single vector element as a scalar.
    Index(Var, usize),
    Sum(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    /// `logsumexp(z) - z[target]` for a logit vector `z`.
    SoftmaxCrossEntropy(Var, usize),
}

impl Op {
    /// Operand handles, in argument order.
    pub fn inputs(&self) -> (Option<Var>, Option<Var>) {
        match *self {
            Op::Leaf => (None, None),
            Op::MatVec(a, b)
            | Op::Dot(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Min(a, b)
            | Op::Scale(a, b)
            | Op::Concat(a, b) => (Some(a), Some(b)),
            Op::Slice(a, _)
            | Op::Index(a, _)
            | Op::Sum(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxCrossEntropy(a, _) => (Some(a), None),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    shape: Shape,
    offset: usize,
}

/// Ordered record of primitive applications with their forward values.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all nodes but keeps the arena allocations.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn op(&self, v: Var) -> Op {
        self.nodes[v.0].op
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        &self.values[n.offset..n.offset + n.shape.numel()]
    }

    /// First entry of a node's value; the value itself for scalars.
    pub fn scalar(&self, v: Var) -> f64 {
        self.values[self.nodes[v.0].offset]
    }

    /// Records a leaf (parameter, input or constant).
    pub fn leaf(&mut self, shape: Shape, values: &[f64]) -> Result<Var> {
        if values.len() != shape.numel() {
            return Err(AutodiffError::ValueCount {
                shape,
                got: values.len(),
            });
        }
        let offset = self.values.len();
        self.values.extend_from_slice(values);
        self.nodes.push(Node {
            op: Op::Leaf,
            shape,
            offset,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn scalar_leaf(&mut self, x: f64) -> Var {
        self.leaf(Shape::Scalar, &[x]).expect("scalar leaf")
    }

    pub fn vector_leaf(&mut self, values: &[f64]) -> Var {
        self.leaf(Shape::Vector(values.len()), values)
            .expect("vector leaf")
    }

    pub fn zeros(&mut self, shape: Shape) -> Var {
        let offset = self.values.len();
        self.values.resize(offset + shape.numel(), 0.0);
        self.nodes.push(Node {
            op: Op::Leaf,
            shape,
            offset,
        });
        Var(self.nodes.len() - 1)
    }

    /// Smallest distance from a kink (`relu` at zero, `min` at a tie) over
    /// the nodes that depend on any of `leaves`; infinite when there are none.
    /// Finite differences are only trustworthy when this exceeds the step.
    pub fn kink_margin(&self, leaves: &[Var]) -> f64 {
        let mut depends = vec![false; self.nodes.len()];
        for l in leaves {
            depends[l.0] = true;
        }
        let mut margin = f64::INFINITY;
        for i in 0..self.nodes.len() {
            let (a, b) = self.nodes[i].op.inputs();
            if !a.into_iter().chain(b).any(|v| depends[v.0]) {
                continue;
            }
            depends[i] = true;
            match self.nodes[i].op {
                Op::Relu(a) => {
                    margin = self.value(a).iter().fold(margin, |m, x| m.min(x.abs()));
                }
                Op::Min(a, b) => {
                    for (x, y) in self.value(a).iter().zip(self.value(b)) {
                        margin = margin.min((x - y).abs());
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Overwrites a leaf's values. Call [`Tape::replay`] afterwards to
    /// propagate the change to dependent nodes.
    pub fn set_leaf(&mut self, v: Var, values: &[f64]) -> Result<()> {
        let node = self.nodes[v.0];
        if node.op != Op::Leaf {
            return Err(AutodiffError::BadOperand {
                op: "set_leaf",
                shape: node.shape,
            });
        }
        if values.len() != node.shape.numel() {
            return Err(AutodiffError::ValueCount {
                shape: node.shape,
                got: values.len(),
            });
        }
        self.values[node.offset..node.offset + values.len()].copy_from_slice(values);
        Ok(())
    }

    fn push(&mut self, op: Op, shape: Shape) -> Var {
        let offset = self.values.len();
        self.values.resize(offset + shape.numel(), 0.0);
        let node = Node { op, shape, offset };
        let (before, out) = self.values.split_at_mut(offset);
        eval(&self.nodes, node, before, out);
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(sa)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        match (self.shape(w), self.shape(x)) {
            (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => {
                Ok(self.push(Op::MatVec(w, x), Shape::Vector(r)))
            }
            (lhs, rhs) => Err(AutodiffError::ShapeMismatch {
                op: "matvec",
                lhs,
                rhs,
            }),
        }
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        match self.same_shape("dot", a, b)? {
            Shape::Vector(_) => Ok(self.push(Op::Dot(a, b), Shape::Scalar)),
            shape => Err(AutodiffError::BadOperand { op: "dot", shape }),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    /// Elementwise minimum.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("min", a, b)?;
        Ok(self.push(Op::Min(a, b), s))
    }

    pub fn scale(&mut self, s: Var, t: Var) -> Result<Var> {
        match self.shape(s) {
            Shape::Scalar => {
                let shape = self.shape(t);
                Ok(self.push(Op::Scale(s, t), shape))
            }
            other => Err(AutodiffError::ShapeMismatch {
                op: "scale",
                lhs: other,
                rhs: self.shape(t),
            }),
        }
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        match (self.shape(a), self.shape(b)) {
            (Shape::Vector(n), Shape::Vector(m)) => {
                Ok(self.push(Op::Concat(a, b), Shape::Vector(n + m)))
            }
            (lhs, rhs) => Err(AutodiffError::ShapeMismatch {
                op: "concat",
                lhs,
                rhs,
            }),
        }
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        match self.shape(a) {
            shape @ Shape::Vector(n) => {
                if start + len > n {
                    return Err(AutodiffError::OutOfRange {
                        op: "slice",
                        index: start + len,
                        shape,
                    });
                }
                Ok(self.push(Op::Slice(a, start), Shape::Vector(len)))
            }
            shape => Err(AutodiffError::BadOperand { op: "slice", shape }),
        }
    }

    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        match self.shape(a) {
            Shape::Vector(n) if i < n => Ok(self.push(Op::Index(a, i), Shape::Scalar)),
            shape => Err(AutodiffError::OutOfRange {
                op: "index",
                index: i,
                shape,
            }),
        }
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a), Shape::Scalar)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::Relu(a), s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::Sigmoid(a), s)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::Tanh(a), s)
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        match self.shape(logits) {
            Shape::Vector(n) if target < n => {
                Ok(self.push(Op::SoftmaxCrossEntropy(logits, target), Shape::Scalar))
            }
            shape => Err(AutodiffError::OutOfRange {
                op: "softmax_cross_entropy",
                index: target,
                shape,
            }),
        }
    }

    /// Recomputes every non-leaf node from the current leaf values, in
    /// recording order.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            let node = self.nodes[i];
            if node.op == Op::Leaf {
                continue;
            }
            let (before, rest) = self.values.split_at_mut(node.offset);
            eval(&self.nodes, node, before, &mut rest[..node.shape.numel()]);
        }
    }

    /// Reverse sweep from a scalar `loss`. Gradients are accumulated over
    /// every use of a node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<'_>> {
        let shape = self.shape(loss);
        if shape != Shape::Scalar {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let end = self.nodes[loss.0].offset + 1;
        let mut grads = vec![0.0; end];
        grads[end - 1] = 1.0;
        for idx in (0..=loss.0).rev() {
            let node = self.nodes[idx];
            if node.op == Op::Leaf {
                continue;
            }
            let (before, after) = grads.split_at_mut(node.offset);
            let g = &after[..node.shape.numel()];
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            backprop(self, node, g, before);
        }
        Ok(Gradients { tape: self, grads })
    }
}

/// Gradient of a scalar loss with respect to every node at or before it.
pub struct Gradients<'t> {
    tape: &'t Tape,
    grads: Vec<f64>,
}

impl Gradients<'_> {
    /// Gradient for `v`; zeros for nodes recorded after the loss.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        let node = &self.tape.nodes[v.0];
        let n = node.shape.numel();
        if node.offset >= self.grads.len() {
            return vec![0.0; n];
        }
        self.grads[node.offset..node.offset + n].to_vec()
    }

    /// Adds the gradient for `v` into `acc`.
    pub fn accumulate_into(&self, v: Var, acc: &mut [f64]) {
        let node = &self.tape.nodes[v.0];
        if node.offset >= self.grads.len() {
            return;
        }
        let g = &self.grads[node.offset..node.offset + node.shape.numel()];
        for (a, x) in acc.iter_mut().zip(g) {
            *a += x;
        }
    }
}

fn span(nodes: &[Node], v: Var) -> (usize, usize) {
    let n = &nodes[v.0];
    (n.offset, n.offset + n.shape.numel())
}

fn eval(nodes: &[Node], node: Node, vals: &[f64], out: &mut [f64]) {
    let get = |v: Var| {
        let (a, b) = span(nodes, v);
        &vals[a..b]
    };
    match node.op {
        Op::Leaf => {}
        Op::MatVec(w, x) => {
            let (wv, xv) = (get(w), get(x));
            let cols = xv.len();
            for (o, row) in out.iter_mut().zip(wv.chunks_exact(cols)) {
                *o = row.iter().zip(xv).map(|(a, b)| a * b).sum();
            }
        }
        Op::Dot(a, b) => out[0] = get(a).iter().zip(get(b)).map(|(x, y)| x * y).sum(),
        Op::Add(a, b) => zip_into(out, get(a), get(b), |x, y| x + y),
        Op::Sub(a, b) => zip_into(out, get(a), get(b), |x, y| x - y),
        Op::Mul(a, b) => zip_into(out, get(a), get(b), |x, y| x * y),
        Op::Min(a, b) => zip_into(out, get(a), get(b), |x, y| if x <= y { x } else { y }),
        Op::Scale(s, t) => {
            let k = get(s)[0];
            for (o, x) in out.iter_mut().zip(get(t)) {
                *o = k * x;
            }
        }
        Op::Concat(a, b) => {
            let av = get(a);
            out[..av.len()].copy_from_slice(av);
            out[av.len()..].copy_from_slice(get(b));
        }
        Op::Slice(a, start) => {
            let n = out.len();
            out.copy_from_slice(&get(a)[start..start + n]);
        }
        Op::Index(a, i) => out[0] = get(a)[i],
        Op::Sum(a) => out[0] = get(a).iter().sum(),
        Op::Relu(a) => map_into(out, get(a), |x| if x > 0.0 { x } else { 0.0 }),
        Op::Sigmoid(a) => map_into(out, get(a), sigmoid),
        Op::Tanh(a) => map_into(out, get(a), f64::tanh),
        Op::SoftmaxCrossEntropy(a, target) => {
            let z = get(a);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            out[0] = lse - z[target];
        }
    }
}

fn zip_into(out: &mut [f64], a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = f(*x, *y);
    }
}

fn map_into(out: &mut [f64], a: &[f64], f: impl Fn(f64) -> f64) {
    for (o, x) in out.iter_mut().zip(a) {
        *o = f(*x);
    }
}

fn backprop(tape: &Tape, node: Node, g: &[f64], grads: &mut [f64]) {
    let nodes = &tape.nodes;
    let vals = &tape.values;
    let val = |v: Var| {
        let (a, b) = span(nodes, v);
        &vals[a..b]
    };
    let out = &vals[node.offset..node.offset + node.shape.numel()];
    macro_rules! grad_of {
        ($v:expr) => {{
            let (a, b) = span(nodes, $v);
            &mut grads[a..b]
        }};
    }
    match node.op {
        Op::Leaf => {}
        Op::MatVec(w, x) => {
            let xv = val(x);
            let cols = xv.len();
            {
                let gw = grad_of!(w);
                for (row, gi) in gw.chunks_exact_mut(cols).zip(g) {
                    for (r, xj) in row.iter_mut().zip(xv) {
                        *r += gi * xj;
                    }
                }
            }
            let wv = val(w);
            let gx = grad_of!(x);
            for (row, gi) in wv.chunks_exact(cols).zip(g) {
                for (gxj, wij) in gx.iter_mut().zip(row) {
                    *gxj += gi * wij;
                }
            }
        }
        Op::Dot(a, b) => {
            let k = g[0];
            let (av, bv) = (val(a), val(b));
            for (ga, y) in grad_of!(a).iter_mut().zip(bv) {
                *ga += k * y;
            }
            for (gb, x) in grad_of!(b).iter_mut().zip(av) {
                *gb += k * x;
            }
        }
        Op::Add(a, b) => {
            add_into(grad_of!(a), g, 1.0);
            add_into(grad_of!(b), g, 1.0);
        }
        Op::Sub(a, b) => {
            add_into(grad_of!(a), g, 1.0);
            add_into(grad_of!(b), g, -1.0);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(a), val(b));
            for ((ga, gi), y) in grad_of!(a).iter_mut().zip(g).zip(bv) {
                *ga += gi * y;
            }
            for ((gb, gi), x) in grad_of!(b).iter_mut().zip(g).zip(av) {
                *gb += gi * x;
            }
        }
        Op::Min(a, b) => {
            let (av, bv) = (val(a), val(b));
            for i in 0..g.len() {
                if av[i] <= bv[i] {
                    grad_of!(a)[i] += g[i];
                } else {
                    grad_of!(b)[i] += g[i];
                }
            }
        }
        Op::Scale(s, t) => {
            let k = val(s)[0];
            let tv = val(t);
            grad_of!(s)[0] += g.iter().zip(tv).map(|(gi, x)| gi * x).sum::<f64>();
            add_into(grad_of!(t), g, k);
        }
        Op::Concat(a, b) => {
            let n = nodes[a.0].shape.numel();
            add_into(grad_of!(a), &g[..n], 1.0);
            add_into(grad_of!(b), &g[n..], 1.0);
        }
        Op::Slice(a, start) => {
            let ga = grad_of!(a);
            add_into(&mut ga[start..start + g.len()], g, 1.0);
        }
        Op::Index(a, i) => grad_of!(a)[i] += g[0],
        Op::Sum(a) => {
            for ga in grad_of!(a).iter_mut() {
                *ga += g[0];
            }
        }
        Op::Relu(a) => {
            let av = val(a);
            for ((ga, gi), x) in grad_of!(a).iter_mut().zip(g).zip(av) {
                if *x > 0.0 {
                    *ga += gi;
                }
            }
        }
        Op::Sigmoid(a) => {
            for ((ga, gi), y) in grad_of!(a).iter_mut().zip(g).zip(out) {
                *ga += gi * y * (1.0 - y);
            }
        }
        Op::Tanh(a) => {
            for ((ga, gi), y) in grad_of!(a).iter_mut().zip(g).zip(out) {
                *ga += gi * (1.0 - y * y);
            }
        }
        Op::SoftmaxCrossEntropy(a, target) => {
            let z = val(a);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = z.iter().map(|x| (x - max).exp()).sum();
            let ga = grad_of!(a);
            for (j, (gj, zj)) in ga.iter_mut().zip(z).enumerate() {
                let p = (zj - max).exp() / denom;
                let onehot = if j == target { 1.0 } else { 0.0 };
                *gj += g[0] * (p - onehot);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
    /// [`Tape::kink_margin`] at the checked point.
    pub kink_margin: f64,
}

/// Checks the gradient of the scalar function built by `f` at `point`.
///
/// `f` receives the tape and one leaf per entry of `point`, and returns the
/// scalar output. The relative error of each partial derivative is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-5)`.
pub fn grad_check<F>(
    f: F,
    point: &[(Shape, Vec<f64>)],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval_at = |pt: &[(Shape, Vec<f64>)]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves = pt
            .iter()
            .map(|(s, v)| tape.leaf(*s, v))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &leaves)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let leaves = point
        .iter()
        .map(|(s, v)| tape.leaf(*s, v))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &leaves)?;
    let kink_margin = tape.kink_margin(&leaves);
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|&l| grads.wrt(l)).collect();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = point.to_vec();
    for (k, (_, values)) in point.iter().enumerate() {
        for j in 0..values.len() {
            probe[k].1[j] = values[j] + step;
            let plus = eval_at(&probe)?;
            probe[k].1[j] = values[j] - step;
            let minus = eval_at(&probe)?;
            probe[k].1[j] = values[j];
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[k][j];
            let denom = a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max((a - numeric).abs() / denom);
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        entries_checked: checked,
        tolerance,
        passed: worst <= tolerance,
        kink_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_relu_values() {
        let mut t = Tape::new();
        let z = t.scalar_leaf(0.0);
        let s = t.sigmoid(z);
        assert_eq!(t.scalar(s), 0.5);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(z), vec![0.25]);

        let neg = t.scalar_leaf(-1.0);
        let pos = t.scalar_leaf(2.0);
        let rn = t.relu(neg);
        let rp = t.relu(pos);
        assert_eq!(t.scalar(rn), 0.0);
        assert_eq!(t.scalar(rp), 2.0);
        assert_eq!(t.backward(rn).unwrap().wrt(neg), vec![0.0]);
    }

    #[test]
    fn relu_kink_has_zero_gradient() {
        let mut t = Tape::new();
        let z = t.scalar_leaf(0.0);
        let r = t.relu(z);
        assert_eq!(t.backward(r).unwrap().wrt(z), vec![0.0]);
    }

    #[test]
    fn min_routes_gradient_to_smaller_argument() {
        let mut t = Tape::new();
        let a = t.scalar_leaf(0.3);
        let b = t.scalar_leaf(0.1);
        let m = t.min(a, b).unwrap();
        assert_eq!(t.scalar(m), 0.1);
        let g = t.backward(m).unwrap();
        assert_eq!(g.wrt(a), vec![0.0]);
        assert_eq!(g.wrt(b), vec![1.0]);
    }

    #[test]
    fn min_tie_routes_to_first_argument() {
        let mut t = Tape::new();
        let a = t.scalar_leaf(0.5);
        let b = t.scalar_leaf(0.5);
        let m = t.min(a, b).unwrap();
        let g = t.backward(m).unwrap();
        assert_eq!(g.wrt(a), vec![1.0]);
        assert_eq!(g.wrt(b), vec![0.0]);
    }

    #[test]
    fn repeated_use_accumulates() {
        let mut t = Tape::new();
        let x = t.scalar_leaf(1.7);
        let y = t.add(x, x).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x), vec![2.0]);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut t = Tape::new();
        let a = t.vector_leaf(&[1.0, 2.0]);
        let b = t.vector_leaf(&[1.0, 2.0, 3.0]);
        let err = t.add(a, b).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::ShapeMismatch {
                op: "add",
                lhs: Shape::Vector(2),
                rhs: Shape::Vector(3)
            }
        );
        assert!(err.to_string().contains("add"));
        let w = t.leaf(Shape::Matrix(2, 2), &[1.0; 4]).unwrap();
        assert!(t.matvec(w, b).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let a = t.vector_leaf(&[1.0, 2.0]);
        assert!(matches!(
            t.backward(a),
            Err(AutodiffError::NonScalarLoss(Shape::Vector(2)))
        ));
    }

    #[test]
    fn kink_margin_tracks_dependent_nodes() {
        let mut t = Tape::new();
        let x = t.scalar_leaf(0.25);
        let c = t.scalar_leaf(0.0);
        let _ = t.relu(c);
        let d = t.sub(x, c).unwrap();
        let _ = t.relu(d);
        assert_eq!(t.kink_margin(&[x]), 0.25);
        assert_eq!(t.kink_margin(&[]), f64::INFINITY);
        assert_eq!(t.kink_margin(&[c]), 0.0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut t = Tape::new();
        let w = t
            .leaf(Shape::Matrix(2, 3), &[0.1, -0.2, 0.3, 0.7, 0.05, -0.9])
            .unwrap();
        let x = t.vector_leaf(&[1.0, 0.5, -2.0]);
        let y = t.matvec(w, x).unwrap();
        let s = t.sigmoid(y);
        let h = t.tanh(s);
        let l = t.softmax_cross_entropy(h, 1).unwrap();
        let before = t.value(l).to_vec();
        let snapshot = t.clone();
        t.replay();
        assert_eq!(t.value(l), &before[..]);
        assert_eq!(t.values, snapshot.values);

        t.set_leaf(x, &[0.0, 0.0, 0.0]).unwrap();
        t.replay();
        assert_ne!(t.value(l), &before[..]);
    }

    #[test]
    fn cross_entropy_matches_manual_softmax() {
        let mut t = Tape::new();
        let z = t.vector_leaf(&[1.0, 2.0, 0.5]);
        let l = t.softmax_cross_entropy(z, 2).unwrap();
        let denom: f64 = [1.0f64, 2.0, 0.5].iter().map(|x| x.exp()).sum();
        let expected = -(0.5f64.exp() / denom).ln();
        assert!((t.scalar(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn grad_check_min_away_from_tie() {
        let report = grad_check(
            |t, v| t.min(v[0], v[1]),
            &[(Shape::Scalar, vec![0.3]), (Shape::Scalar, vec![0.1])],
            1e-6,
            1e-3,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.entries_checked, 2);
    }
}
