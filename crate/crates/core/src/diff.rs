//! Reverse-mode differentiation over a flat tape of scalar nodes.
//!
//! Every node stores its value and the local partial derivative towards
//! each parent, so the backward pass is a single reverse sweep of
//! multiply-accumulates. A handful of fused vector operations (`linear`,
//! `dot`, `sq_norm`, `sq_dist`, `cosine_sim`) produce one node with many
//! parents instead of a chain of binary nodes.
//!
//! ```
//! use madcluster::diff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(3.0);
//! let y = tape.mul(x, x);
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x), 6.0);
//! ```

use crate::error::DiffError;

/// Inputs to `log` below this value are clamped to it.
pub const LOG_FLOOR: f64 = 1e-7;

type DResult<T> = std::result::Result<T, DiffError>;

/// Handle to a scalar node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Affine,
    PowConst,
    Exp,
    Log,
    Sqrt,
    Max0,
    Clamp,
    Tanh,
    Sigmoid,
    Sum,
    Linear,
    Dot,
    SqNorm,
    SqDist,
    CosineSim,
}

/// Read-only view of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub value: f64,
    pub grad: f64,
    pub op: Op,
    pub parents: Vec<Var>,
}

/// Position on the tape that [`Tape::rewind`] can return to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint {
    nodes: usize,
    edges: usize,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    grads: Vec<f64>,
    ops: Vec<Op>,
    // edges of node i live in edge_end[i-1]..edge_end[i]
    edge_end: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    adjoint: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.rewind(Checkpoint { nodes: 0, edges: 0 });
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            nodes: self.values.len(),
            edges: self.parents.len(),
        }
    }

    /// Drops every node created after `cp`. Nodes before it keep their
    /// values and accumulated gradients.
    pub fn rewind(&mut self, cp: Checkpoint) {
        self.values.truncate(cp.nodes);
        self.grads.truncate(cp.nodes);
        self.ops.truncate(cp.nodes);
        self.edge_end.truncate(cp.nodes);
        self.parents.truncate(cp.edges);
        self.partials.truncate(cp.edges);
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn values(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.value(v)).collect()
    }

    pub fn grad(&self, v: Var) -> f64 {
        self.grads[v.index()]
    }

    /// Overwrites the value of a leaf. Nodes computed from it are not updated.
    pub fn set_value(&mut self, v: Var, value: f64) {
        debug_assert_eq!(self.ops[v.index()], Op::Leaf);
        self.values[v.index()] = value;
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn node(&self, v: Var) -> Node {
        let (lo, hi) = self.edge_range(v.index());
        Node {
            value: self.values[v.index()],
            grad: self.grads[v.index()],
            op: self.ops[v.index()],
            parents: self.parents[lo..hi].iter().map(|&p| Var(p)).collect(),
        }
    }

    fn edge_range(&self, i: usize) -> (usize, usize) {
        let lo = if i == 0 { 0 } else { self.edge_end[i - 1] as usize };
        (lo, self.edge_end[i] as usize)
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        let id = self.values.len();
        self.values.push(value);
        self.grads.push(0.0);
        self.ops.push(op);
        self.edge_end.push(self.parents.len() as u32);
        Var(id as u32)
    }

    #[inline]
    fn edge(&mut self, parent: Var, partial: f64) {
        self.parents.push(parent.0);
        self.partials.push(partial);
        *self.edge_end.last_mut().unwrap() += 1;
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.push(Op::Add, self.value(a) + self.value(b));
        self.edge(a, 1.0);
        self.edge(b, 1.0);
        v
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.push(Op::Sub, self.value(a) - self.value(b));
        self.edge(a, 1.0);
        self.edge(b, -1.0);
        v
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let v = self.push(Op::Mul, va * vb);
        self.edge(a, vb);
        self.edge(b, va);
        v
    }

    pub fn div(&mut self, a: Var, b: Var) -> DResult<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb == 0.0 {
            return Err(DiffError::DivisionByZero);
        }
        let v = self.push(Op::Div, va / vb);
        self.edge(a, 1.0 / vb);
        self.edge(b, -va / (vb * vb));
        Ok(v)
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.push(Op::Affine, scale * self.value(a) + shift);
        self.edge(a, scale);
        v
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 0.0)
    }

    /// `a^p` for a constant exponent. Negative bases need an integer exponent.
    pub fn pow_const(&mut self, a: Var, p: f64) -> DResult<Var> {
        let va = self.value(a);
        if va < 0.0 && p.fract() != 0.0 || va == 0.0 && p < 1.0 {
            return Err(DiffError::Domain { op: "pow_const", value: va });
        }
        let v = self.push(Op::PowConst, va.powf(p));
        self.edge(a, p * va.powf(p - 1.0));
        Ok(v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        let v = self.push(Op::Exp, e);
        self.edge(a, e);
        v
    }

    /// Natural log with inputs in `[0, LOG_FLOOR)` clamped to `LOG_FLOOR`.
    /// The clamped region has zero derivative.
    pub fn log(&mut self, a: Var) -> DResult<Var> {
        let va = self.value(a);
        if !(va >= 0.0) {
            return Err(DiffError::Domain { op: "log", value: va });
        }
        if va < LOG_FLOOR {
            let v = self.push(Op::Log, LOG_FLOOR.ln());
            self.edge(a, 0.0);
            return Ok(v);
        }
        let v = self.push(Op::Log, va.ln());
        self.edge(a, 1.0 / va);
        Ok(v)
    }

    pub fn sqrt(&mut self, a: Var) -> DResult<Var> {
        let va = self.value(a);
        if !(va > 0.0) {
            return Err(DiffError::Domain { op: "sqrt", value: va });
        }
        let s = va.sqrt();
        let v = self.push(Op::Sqrt, s);
        self.edge(a, 0.5 / s);
        Ok(v)
    }

    /// Hinge `max(0, a)`; the derivative at exactly 0 is taken as 0.
    pub fn max0(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let v = self.push(Op::Max0, va.max(0.0));
        self.edge(a, if va > 0.0 { 1.0 } else { 0.0 });
        v
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let va = self.value(a);
        let v = self.push(Op::Clamp, va.clamp(lo, hi));
        self.edge(a, if va >= lo && va <= hi { 1.0 } else { 0.0 });
        v
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        let v = self.push(Op::Tanh, t);
        self.edge(a, 1.0 - t * t);
        v
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.value(a));
        let v = self.push(Op::Sigmoid, s);
        self.edge(a, s * (1.0 - s));
        v
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let total = xs.iter().map(|&x| self.value(x)).sum();
        let v = self.push(Op::Sum, total);
        for &x in xs {
            self.edge(x, 1.0);
        }
        v
    }

    /// `sum_i w_i * x_i + bias`.
    pub fn linear(&mut self, weights: &[Var], xs: &[Var], bias: Option<Var>) -> DResult<Var> {
        if weights.len() != xs.len() {
            return Err(DiffError::Shape {
                expected: xs.len(),
                got: weights.len(),
            });
        }
        let mut total = bias.map_or(0.0, |b| self.value(b));
        for (&w, &x) in weights.iter().zip(xs) {
            total += self.value(w) * self.value(x);
        }
        let v = self.push(Op::Linear, total);
        for (&w, &x) in weights.iter().zip(xs) {
            let (vw, vx) = (self.value(w), self.value(x));
            self.edge(w, vx);
            self.edge(x, vw);
        }
        if let Some(b) = bias {
            self.edge(b, 1.0);
        }
        Ok(v)
    }

    /// Row-major `rows x xs.len()` matrix times vector.
    pub fn matvec(&mut self, matrix: &[Var], xs: &[Var]) -> DResult<Vec<Var>> {
        let cols = xs.len();
        if cols == 0 || !matrix.len().is_multiple_of(cols) {
            return Err(DiffError::Shape {
                expected: cols,
                got: matrix.len(),
            });
        }
        matrix.chunks(cols).map(|row| self.linear(row, xs, None)).collect()
    }

    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> DResult<Var> {
        let v = self.linear(a, b, None)?;
        self.ops[v.index()] = Op::Dot;
        Ok(v)
    }

    /// Squared Euclidean norm.
    pub fn sq_norm(&mut self, a: &[Var]) -> Var {
        let total = a.iter().map(|&x| self.value(x).powi(2)).sum();
        let v = self.push(Op::SqNorm, total);
        for &x in a {
            let vx = self.value(x);
            self.edge(x, 2.0 * vx);
        }
        v
    }

    /// Squared Euclidean distance `|a - b|^2`.
    pub fn sq_dist(&mut self, a: &[Var], b: &[Var]) -> DResult<Var> {
        if a.len() != b.len() {
            return Err(DiffError::Shape {
                expected: a.len(),
                got: b.len(),
            });
        }
        let total = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (self.value(x) - self.value(y)).powi(2))
            .sum();
        let v = self.push(Op::SqDist, total);
        for (&x, &y) in a.iter().zip(b) {
            let d = self.value(x) - self.value(y);
            self.edge(x, 2.0 * d);
            self.edge(y, -2.0 * d);
        }
        Ok(v)
    }

    /// Cosine similarity; either argument having zero norm is an error.
    pub fn cosine_sim(&mut self, a: &[Var], b: &[Var]) -> DResult<Var> {
        if a.len() != b.len() {
            return Err(DiffError::Shape {
                expected: a.len(),
                got: b.len(),
            });
        }
        let va = self.values(a);
        let vb = self.values(b);
        let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(DiffError::ZeroNorm { op: "cosine_sim" });
        }
        let ab: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let cos = ab / (na * nb);
        let v = self.push(Op::CosineSim, cos);
        for (i, &x) in a.iter().enumerate() {
            self.edge(x, vb[i] / (na * nb) - cos * va[i] / (na * na));
        }
        for (i, &y) in b.iter().enumerate() {
            self.edge(y, va[i] / (na * nb) - cos * vb[i] / (nb * nb));
        }
        Ok(v)
    }

    /// Accumulates `d root / d node` into the gradient of every node up to
    /// `root`. Calling it twice without [`Tape::zero_grads`] adds the
    /// gradients twice.
    pub fn backward(&mut self, root: Var) -> DResult<()> {
        let n = root.index() + 1;
        if n > self.values.len() {
            return Err(DiffError::StaleNode(root.0));
        }
        self.adjoint.clear();
        self.adjoint.resize(n, 0.0);
        self.adjoint[n - 1] = 1.0;
        for i in (0..n).rev() {
            let a = self.adjoint[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = self.edge_range(i);
            for e in lo..hi {
                self.adjoint[self.parents[e] as usize] += self.partials[e] * a;
            }
        }
        for (g, a) in self.grads.iter_mut().zip(&self.adjoint) {
            *g += a;
        }
        Ok(())
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

/// Inverse of [`sigmoid`] on (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
