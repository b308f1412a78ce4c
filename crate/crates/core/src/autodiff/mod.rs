//! Minimal reverse-mode differentiation tape.
//!
//! The operator set is exactly what the learned solver emits: dense affine
//! algebra, the usual smooth activations, the three simplex normalizers and
//! two special nodes. `gaussian_reparam` routes gradients to the mean and
//! deviation of a sampled latent, and `oracle_value` injects an externally
//! computed objective value whose backward pass multiplies by the stored
//! subgradient (a first-order rule; nothing differentiates through the
//! oracle's argmin). Constants never receive gradients, which is how detached
//! quantities (features, bundle subgradients) are marked.
//!
//! Shape checks panic: they are programming errors, not runtime conditions.

mod optim;

pub use optim::{adam_step, clip_global_norm, AdamState};

use crate::error::{Error, Result};
use crate::simplex;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }
}

enum Kind {
    Constant,
    Leaf,
    Op(Op),
}

enum Op {
    Add(Value, Value),
    Sub(Value, Value),
    /// Elementwise product of same-length vectors.
    Mul(Value, Value),
    /// `x * s` with `s` scalar.
    Scale(Value, Value),
    /// `W x` with `W` a matrix and `x` a vector.
    MatVec(Value, Value),
    Dot(Value, Value),
    Concat(Vec<Value>),
    Slice(Value, usize, usize),
    Sum(Value),
    Sigmoid(Value),
    Tanh(Value),
    Relu(Value),
    Softplus(Value),
    Exp(Value),
    NormSq(Value),
    Softmax(Value),
    Softmin(Value),
    Sparsemax(Value),
    GaussianReparam {
        mu: Value,
        sigma: Value,
        eps: Vec<f64>,
    },
    OracleValue {
        point: Value,
        subgradient: Vec<f64>,
    },
}

struct Node {
    data: Vec<f64>,
    shape: Shape,
    kind: Kind,
}

/// Recorded computation; nodes are appended in topological order, so one
/// reverse sweep visits each exactly once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax_values(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, v: Value) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn scalar(&self, v: Value) -> f64 {
        let node = &self.nodes[v.0];
        assert_eq!(node.shape.len(), 1, "scalar() on a non-scalar value");
        node.data[0]
    }

    fn push(&mut self, data: Vec<f64>, shape: Shape, kind: Kind) -> Value {
        debug_assert_eq!(data.len(), shape.len());
        self.nodes.push(Node { data, shape, kind });
        Value(self.nodes.len() - 1)
    }

    /// Non-differentiable vector; backward never reaches it.
    pub fn constant(&mut self, data: Vec<f64>) -> Value {
        let shape = Shape::Vector(data.len());
        self.push(data, shape, Kind::Constant)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Value {
        self.push(vec![x], Shape::Vector(1), Kind::Constant)
    }

    /// Non-differentiable row-major matrix.
    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Value {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        self.push(data, Shape::Matrix(rows, cols), Kind::Constant)
    }

    /// Differentiable parameter vector.
    pub fn leaf(&mut self, data: Vec<f64>) -> Value {
        let shape = Shape::Vector(data.len());
        self.push(data, shape, Kind::Leaf)
    }

    /// Differentiable row-major parameter matrix.
    pub fn leaf_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Value {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        self.push(data, Shape::Matrix(rows, cols), Kind::Leaf)
    }

    fn same_len(&self, a: Value, b: Value, op: &str) -> usize {
        let (la, lb) = (self.nodes[a.0].shape.len(), self.nodes[b.0].shape.len());
        assert_eq!(la, lb, "{op}: length mismatch ({la} vs {lb})");
        la
    }

    pub fn add(&mut self, a: Value, b: Value) -> Value {
        let n = self.same_len(a, b, "add");
        let data = (0..n)
            .map(|i| self.nodes[a.0].data[i] + self.nodes[b.0].data[i])
            .collect();
        self.push(data, Shape::Vector(n), Kind::Op(Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Value {
        let n = self.same_len(a, b, "sub");
        let data = (0..n)
            .map(|i| self.nodes[a.0].data[i] - self.nodes[b.0].data[i])
            .collect();
        self.push(data, Shape::Vector(n), Kind::Op(Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Value {
        let n = self.same_len(a, b, "mul");
        let data = (0..n)
            .map(|i| self.nodes[a.0].data[i] * self.nodes[b.0].data[i])
            .collect();
        self.push(data, Shape::Vector(n), Kind::Op(Op::Mul(a, b)))
    }

    /// Multiplies a vector by a scalar value.
    pub fn scale(&mut self, x: Value, s: Value) -> Value {
        assert_eq!(
            self.nodes[s.0].shape.len(),
            1,
            "scale: scale factor must be scalar"
        );
        let factor = self.nodes[s.0].data[0];
        let data = self.nodes[x.0].data.iter().map(|&v| v * factor).collect();
        let shape = Shape::Vector(self.nodes[x.0].shape.len());
        self.push(data, shape, Kind::Op(Op::Scale(x, s)))
    }

    pub fn matvec(&mut self, w: Value, x: Value) -> Value {
        let (rows, cols) = match self.nodes[w.0].shape {
            Shape::Matrix(r, c) => (r, c),
            Shape::Vector(_) => panic!("matvec: first operand must be a matrix"),
        };
        assert_eq!(
            self.nodes[x.0].shape.len(),
            cols,
            "matvec: vector length must equal matrix columns"
        );
        let mut data = vec![0.0; rows];
        {
            let wd = &self.nodes[w.0].data;
            let xd = &self.nodes[x.0].data;
            for (r, out) in data.iter_mut().enumerate() {
                let row = &wd[r * cols..(r + 1) * cols];
                *out = row.iter().zip(xd).map(|(a, b)| a * b).sum();
            }
        }
        self.push(data, Shape::Vector(rows), Kind::Op(Op::MatVec(w, x)))
    }

    pub fn dot(&mut self, a: Value, b: Value) -> Value {
        let n = self.same_len(a, b, "dot");
        let mut total = 0.0;
        for i in 0..n {
            total += self.nodes[a.0].data[i] * self.nodes[b.0].data[i];
        }
        self.push(vec![total], Shape::Vector(1), Kind::Op(Op::Dot(a, b)))
    }

    pub fn concat(&mut self, parts: &[Value]) -> Value {
        assert!(!parts.is_empty(), "concat: need at least one part");
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        let shape = Shape::Vector(data.len());
        self.push(data, shape, Kind::Op(Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, x: Value, start: usize, len: usize) -> Value {
        let total = self.nodes[x.0].shape.len();
        assert!(start + len <= total, "slice: out of bounds");
        let data = self.nodes[x.0].data[start..start + len].to_vec();
        self.push(data, Shape::Vector(len), Kind::Op(Op::Slice(x, start, len)))
    }

    pub fn sum(&mut self, x: Value) -> Value {
        let total: f64 = self.nodes[x.0].data.iter().sum();
        self.push(vec![total], Shape::Vector(1), Kind::Op(Op::Sum(x)))
    }

    fn unary(&mut self, x: Value, f: impl Fn(f64) -> f64, op: impl Fn(Value) -> Op) -> Value {
        let data = self.nodes[x.0].data.iter().map(|&v| f(v)).collect();
        let shape = Shape::Vector(self.nodes[x.0].shape.len());
        self.push(data, shape, Kind::Op(op(x)))
    }

    pub fn sigmoid(&mut self, x: Value) -> Value {
        self.unary(x, stable_sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, x: Value) -> Value {
        self.unary(x, f64::tanh, Op::Tanh)
    }

    pub fn relu(&mut self, x: Value) -> Value {
        self.unary(x, |v| v.max(0.0), Op::Relu)
    }

    pub fn softplus(&mut self, x: Value) -> Value {
        self.unary(x, stable_softplus, Op::Softplus)
    }

    pub fn exp(&mut self, x: Value) -> Value {
        self.unary(x, f64::exp, Op::Exp)
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&mut self, x: Value) -> Value {
        let total: f64 = self.nodes[x.0].data.iter().map(|v| v * v).sum();
        self.push(vec![total], Shape::Vector(1), Kind::Op(Op::NormSq(x)))
    }

    pub fn softmax(&mut self, x: Value) -> Value {
        let data = softmax_values(&self.nodes[x.0].data);
        let shape = Shape::Vector(data.len());
        self.push(data, shape, Kind::Op(Op::Softmax(x)))
    }

    /// `softmin(x) = softmax(-x)`.
    pub fn softmin(&mut self, x: Value) -> Value {
        let negated: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| -v).collect();
        let data = softmax_values(&negated);
        let shape = Shape::Vector(data.len());
        self.push(data, shape, Kind::Op(Op::Softmin(x)))
    }

    /// Euclidean projection onto the probability simplex; backward passes the
    /// support-centered gradient and zero off the support.
    pub fn sparsemax(&mut self, x: Value) -> Value {
        assert!(
            self.nodes[x.0].shape.len() > 0,
            "sparsemax: empty input vector"
        );
        let data = simplex::project(&self.nodes[x.0].data);
        let shape = Shape::Vector(data.len());
        self.push(data, shape, Kind::Op(Op::Sparsemax(x)))
    }

    /// `mu + sigma .* eps` with external noise; gradients flow to `mu` with
    /// coefficient one and to `sigma` with coefficient `eps`.
    pub fn gaussian_reparam(&mut self, mu: Value, sigma: Value, eps: &[f64]) -> Value {
        let n = self.same_len(mu, sigma, "gaussian_reparam");
        assert_eq!(eps.len(), n, "gaussian_reparam: noise length mismatch");
        let data = (0..n)
            .map(|i| self.nodes[mu.0].data[i] + self.nodes[sigma.0].data[i] * eps[i])
            .collect();
        self.push(
            data,
            Shape::Vector(n),
            Kind::Op(Op::GaussianReparam {
                mu,
                sigma,
                eps: eps.to_vec(),
            }),
        )
    }

    /// External objective value at a tape-tracked point. The backward rule is
    /// first order: the gradient into `point` is `g_out * subgradient`.
    pub fn oracle_value(&mut self, point: Value, value: f64, subgradient: Vec<f64>) -> Value {
        assert_eq!(
            subgradient.len(),
            self.nodes[point.0].shape.len(),
            "oracle_value: subgradient length mismatch"
        );
        self.push(
            vec![value],
            Shape::Vector(1),
            Kind::Op(Op::OracleValue { point, subgradient }),
        )
    }

    /// Reverse sweep from a scalar root; returns one gradient buffer per
    /// reachable differentiable node.
    pub fn backward(&self, root: Value) -> Result<Gradients> {
        if self.nodes[root.0].shape.len() != 1 {
            return Err(Error::contract("backward root must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            let op = match &self.nodes[id].kind {
                Kind::Op(op) => op,
                _ => continue,
            };
            let (before, rest) = grads.split_at_mut(id);
            let gout: &[f64] = rest[0].as_ref().expect("checked above");

            // Gradient buffer for a parent node; constants are skipped, which
            // is what detaches them.
            fn sink<'a>(
                nodes: &[Node],
                before: &'a mut [Option<Vec<f64>>],
                target: Value,
            ) -> Option<&'a mut Vec<f64>> {
                if matches!(nodes[target.0].kind, Kind::Constant) {
                    return None;
                }
                let len = nodes[target.0].shape.len();
                Some(before[target.0].get_or_insert_with(|| vec![0.0; len]))
            }
            macro_rules! sink {
                ($target:expr) => {
                    sink(&self.nodes, before, $target)
                };
            }

            match op {
                Op::Add(a, b) => {
                    if let Some(ga) = sink!(*a) {
                        for (s, g) in ga.iter_mut().zip(gout) {
                            *s += g;
                        }
                    }
                    if let Some(gb) = sink!(*b) {
                        for (s, g) in gb.iter_mut().zip(gout) {
                            *s += g;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(ga) = sink!(*a) {
                        for (s, g) in ga.iter_mut().zip(gout) {
                            *s += g;
                        }
                    }
                    if let Some(gb) = sink!(*b) {
                        for (s, g) in gb.iter_mut().zip(gout) {
                            *s -= g;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
                    if let Some(ga) = sink!(*a) {
                        for i in 0..gout.len() {
                            ga[i] += gout[i] * bd[i];
                        }
                    }
                    if let Some(gb) = sink!(*b) {
                        for i in 0..gout.len() {
                            gb[i] += gout[i] * ad[i];
                        }
                    }
                }
                Op::Scale(x, s) => {
                    let factor = self.nodes[s.0].data[0];
                    let xd = &self.nodes[x.0].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] += gout[i] * factor;
                        }
                    }
                    if let Some(gs) = sink!(*s) {
                        gs[0] += gout.iter().zip(xd).map(|(g, x)| g * x).sum::<f64>();
                    }
                }
                Op::MatVec(w, x) => {
                    let cols = match self.nodes[w.0].shape {
                        Shape::Matrix(_, c) => c,
                        Shape::Vector(_) => unreachable!(),
                    };
                    let wd = &self.nodes[w.0].data;
                    let xd = &self.nodes[x.0].data;
                    if let Some(gw) = sink!(*w) {
                        for (r, g) in gout.iter().enumerate() {
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (slot, xv) in row.iter_mut().zip(xd) {
                                *slot += g * xv;
                            }
                        }
                    }
                    if let Some(gx) = sink!(*x) {
                        for (r, g) in gout.iter().enumerate() {
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (slot, wv) in gx.iter_mut().zip(row) {
                                *slot += g * wv;
                            }
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let g = gout[0];
                    let (ad, bd) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
                    if let Some(ga) = sink!(*a) {
                        for i in 0..ga.len() {
                            ga[i] += g * bd[i];
                        }
                    }
                    if let Some(gb) = sink!(*b) {
                        for i in 0..gb.len() {
                            gb[i] += g * ad[i];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].shape.len();
                        if let Some(gp) = sink!(p) {
                            for i in 0..len {
                                gp[i] += gout[offset + i];
                            }
                        }
                        offset += len;
                    }
                }
                Op::Slice(x, start, len) => {
                    if let Some(gx) = sink!(*x) {
                        for i in 0..*len {
                            gx[start + i] += gout[i];
                        }
                    }
                }
                Op::Sum(x) => {
                    if let Some(gx) = sink!(*x) {
                        for slot in gx.iter_mut() {
                            *slot += gout[0];
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let yd = &self.nodes[id].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] += gout[i] * yd[i] * (1.0 - yd[i]);
                        }
                    }
                }
                Op::Tanh(x) => {
                    let yd = &self.nodes[id].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] += gout[i] * (1.0 - yd[i] * yd[i]);
                        }
                    }
                }
                Op::Relu(x) => {
                    let xd = &self.nodes[x.0].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            if xd[i] > 0.0 {
                                gx[i] += gout[i];
                            }
                        }
                    }
                }
                Op::Softplus(x) => {
                    let xd = &self.nodes[x.0].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] += gout[i] * stable_sigmoid(xd[i]);
                        }
                    }
                }
                Op::Exp(x) => {
                    let yd = &self.nodes[id].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] += gout[i] * yd[i];
                        }
                    }
                }
                Op::NormSq(x) => {
                    let g = gout[0];
                    let xd = &self.nodes[x.0].data;
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gx.len() {
                            gx[i] += 2.0 * g * xd[i];
                        }
                    }
                }
                Op::Softmax(x) => {
                    let yd = &self.nodes[id].data;
                    let inner: f64 = gout.iter().zip(yd).map(|(g, y)| g * y).sum();
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] += yd[i] * (gout[i] - inner);
                        }
                    }
                }
                Op::Softmin(x) => {
                    let yd = &self.nodes[id].data;
                    let inner: f64 = gout.iter().zip(yd).map(|(g, y)| g * y).sum();
                    if let Some(gx) = sink!(*x) {
                        for i in 0..gout.len() {
                            gx[i] -= yd[i] * (gout[i] - inner);
                        }
                    }
                }
                Op::Sparsemax(x) => {
                    let yd = &self.nodes[id].data;
                    let support: Vec<usize> = (0..yd.len()).filter(|&i| yd[i] > 0.0).collect();
                    let mean: f64 =
                        support.iter().map(|&i| gout[i]).sum::<f64>() / support.len() as f64;
                    if let Some(gx) = sink!(*x) {
                        for &i in &support {
                            gx[i] += gout[i] - mean;
                        }
                    }
                }
                Op::GaussianReparam { mu, sigma, eps } => {
                    if let Some(gmu) = sink!(*mu) {
                        for (s, g) in gmu.iter_mut().zip(gout) {
                            *s += g;
                        }
                    }
                    if let Some(gsigma) = sink!(*sigma) {
                        for i in 0..gout.len() {
                            gsigma[i] += gout[i] * eps[i];
                        }
                    }
                }
                Op::OracleValue { point, subgradient } => {
                    let g = gout[0];
                    if let Some(gp) = sink!(*point) {
                        for (slot, sg) in gp.iter_mut().zip(subgradient) {
                            *slot += g * sg;
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Per-node gradient buffers produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` when no gradient
    /// reached the node (constants, or nodes off the root's subgraph).
    pub fn get(&self, v: Value) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
