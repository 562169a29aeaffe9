//! Define-by-run tape with differentiable backward passes.
//!
//! Every vector-Jacobian product is itself expressed with tape operations, so
//! gradients computed with `create_graph = true` can be differentiated again.
//! That is what a gradient-norm penalty needs: the penalty is a function of
//! `∂D/∂x`, and training differentiates it with respect to the weights of `D`.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops;
use std::rc::Rc;

use crate::conv;
use crate::tensor::{Real, Tensor};

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Recip(usize),
    Sqrt(usize),
    Sigmoid(usize),
    Expand(usize),
    SumTo(usize),
    Reshape(usize),
    Conv { x: usize, w: usize, pad: usize },
    ConvT { y: usize, w: usize, pad: usize },
    ConvWGrad { x: usize, y: usize, pad: usize },
    Gather { table: usize, idx: Rc<[usize]> },
    ScatterAdd { src: usize, idx: Rc<[usize]> },
    Concat { parts: Rc<[usize]> },
    Narrow { x: usize, start: usize },
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Arena of recorded operations. Drop it to free every intermediate.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
    grad_enabled: Cell<bool>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: Cell::new(true) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Toggle recording; returns the previous setting. With recording off,
    /// every new node is a constant.
    pub fn set_grad_enabled(&self, on: bool) -> bool {
        self.grad_enabled.replace(on)
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled.get()
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push_rc(Rc::new(value), Op::Leaf, requires_grad)
    }

    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, v: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(v))
    }

    fn push_rc(&self, value: Rc<Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node { value, op, requires_grad });
        Var { graph: self, id }
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, parents: &[usize]) -> Var<'_, T> {
        let rg = self.grad_enabled.get() && {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        self.push_rc(Rc::new(value), op, rg)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn var(&self, id: usize) -> Var<'_, T> {
        Var { graph: self, id }
    }

    /// Gradients of `output` (seeded with ones) with respect to `wrt`.
    ///
    /// With `create_graph` the returned gradients are recorded nodes and can
    /// be differentiated again; otherwise they are constants. Inputs with no
    /// path to `output` get zeros.
    pub fn grad<'g>(&'g self, output: Var<'g, T>, wrt: &[Var<'g, T>], create_graph: bool) -> Vec<Var<'g, T>> {
        let prev = self.grad_enabled.replace(create_graph);
        let n = output.id + 1;
        let mut grads: Vec<Option<usize>> = vec![None; n];
        let seed = Tensor::full(output.value().shape(), T::one());
        grads[output.id] = Some(self.constant(seed).id);

        for id in (0..n).rev() {
            let Some(gid) = grads[id] else { continue };
            let (op, rg) = {
                let nodes = self.nodes.borrow();
                (nodes[id].op.clone(), nodes[id].requires_grad)
            };
            if !rg {
                continue;
            }
            for (p, gp) in self.vjp(&op, self.var(id), self.var(gid)) {
                grads[p] = Some(match grads[p] {
                    None => gp.id,
                    Some(e) => (self.var(e) + gp).id,
                });
            }
        }
        self.grad_enabled.set(prev);

        wrt.iter()
            .map(|v| match grads.get(v.id).copied().flatten() {
                Some(g) => self.var(g),
                None => self.constant(Tensor::zeros(v.value().shape())),
            })
            .collect()
    }

    fn vjp<'g>(&'g self, op: &Op<T>, out: Var<'g, T>, g: Var<'g, T>) -> Vec<(usize, Var<'g, T>)> {
        let mut res = Vec::with_capacity(2);
        let mut emit = |p: usize, f: &dyn Fn() -> Var<'g, T>| {
            if self.requires(p) {
                res.push((p, f()));
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, &|| g);
                emit(*b, &|| g);
            }
            Op::Sub(a, b) => {
                emit(*a, &|| g);
                emit(*b, &|| g.scale(-T::one()));
            }
            Op::Mul(a, b) => {
                emit(*a, &|| g * self.var(*b));
                emit(*b, &|| g * self.var(*a));
            }
            Op::Scale(a, c) => emit(*a, &|| g.scale(*c)),
            Op::AddScalar(a) => emit(*a, &|| g),
            Op::Recip(a) => emit(*a, &|| (g * out * out).scale(-T::one())),
            Op::Sqrt(a) => emit(*a, &|| g * out.recip().scale(T::of(0.5))),
            Op::Sigmoid(a) => emit(*a, &|| g * out * out.scale(-T::one()).add_scalar(T::one())),
            Op::Expand(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                emit(*a, &|| g.sum_to(&shape));
            }
            Op::SumTo(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                emit(*a, &|| g.expand(&shape));
            }
            Op::Reshape(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                emit(*a, &|| g.reshape(&shape));
            }
            Op::Conv { x, w, pad } => {
                emit(*x, &|| g.conv_transpose1d(self.var(*w), *pad));
                emit(*w, &|| self.var(*x).conv1d_weight_grad(g, *pad));
            }
            Op::ConvT { y, w, pad } => {
                emit(*y, &|| g.conv1d(self.var(*w), *pad));
                emit(*w, &|| g.conv1d_weight_grad(self.var(*y), *pad));
            }
            Op::ConvWGrad { x, y, pad } => {
                emit(*x, &|| self.var(*y).conv_transpose1d(g, *pad));
                emit(*y, &|| self.var(*x).conv1d(g, *pad));
            }
            Op::Gather { table, idx } => {
                let rows = self.value_of(*table).shape()[0];
                emit(*table, &|| g.scatter_add_rows(idx, rows));
            }
            Op::ScatterAdd { src, idx } => emit(*src, &|| g.gather_rows(idx)),
            Op::Concat { parts } => {
                let mut start = 0;
                for &p in parts.iter() {
                    let len = self.value_of(p).shape()[1];
                    emit(p, &|| g.narrow(start, len));
                    start += len;
                }
            }
            Op::Narrow { x, start } => {
                let full = self.value_of(*x).shape().to_vec();
                let len = g.value().shape()[1];
                emit(*x, &|| {
                    let mut parts = Vec::with_capacity(3);
                    if *start > 0 {
                        parts.push(self.constant(Tensor::zeros(&[full[0], *start, full[2]])));
                    }
                    parts.push(g);
                    let rest = full[1] - start - len;
                    if rest > 0 {
                        parts.push(self.constant(Tensor::zeros(&[full[0], rest, full[2]])));
                    }
                    Var::concat(&parts)
                });
            }
        }
        res
    }
}

impl<'g, T: Real> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires(self.id)
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.push_rc(self.value(), Op::Leaf, false)
    }

    fn unary(&self, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        self.graph.push(value, op, &[self.id])
    }

    fn binary(&self, other: Var<'g, T>, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        self.graph.push(value, op, &[self.id, other.id])
    }

    fn check_same(&self, other: &Var<'g, T>, op: &str) {
        assert!(std::ptr::eq(self.graph, other.graph), "{op}: vars from different graphs");
        let (a, b) = (self.shape(), other.shape());
        assert_eq!(a, b, "{op}: shape mismatch");
    }

    pub fn scale(&self, c: T) -> Var<'g, T> {
        self.unary(self.value().map(|v| v * c), Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: T) -> Var<'g, T> {
        self.unary(self.value().map(|v| v + c), Op::AddScalar(self.id))
    }

    pub fn recip(&self) -> Var<'g, T> {
        self.unary(self.value().map(|v| v.recip()), Op::Recip(self.id))
    }

    pub fn sqrt(&self) -> Var<'g, T> {
        self.unary(self.value().map(|v| v.sqrt()), Op::Sqrt(self.id))
    }

    pub fn square(&self) -> Var<'g, T> {
        *self * *self
    }

    pub fn sigmoid(&self) -> Var<'g, T> {
        let one = T::one();
        self.unary(self.value().map(|v| one / (one + (-v).exp())), Op::Sigmoid(self.id))
    }

    /// `x · slope` for negative entries; `slope = 0` is a plain ReLU. The
    /// mask is a constant, so higher derivatives vanish as they should.
    pub fn leaky_relu(&self, slope: T) -> Var<'g, T> {
        let mask = self.value().map(|v| if v > T::zero() { T::one() } else { slope });
        *self * self.graph.constant(mask)
    }

    pub fn relu(&self) -> Var<'g, T> {
        self.leaky_relu(T::zero())
    }

    pub fn expand(&self, shape: &[usize]) -> Var<'g, T> {
        if self.shape() == shape {
            return *self;
        }
        self.unary(self.value().expand_to(shape), Op::Expand(self.id))
    }

    pub fn sum_to(&self, shape: &[usize]) -> Var<'g, T> {
        if self.shape() == shape {
            return *self;
        }
        self.unary(self.value().sum_to(shape), Op::SumTo(self.id))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'g, T> {
        let v = (*self.value()).clone().reshape(shape).expect("reshape element count");
        self.unary(v, Op::Reshape(self.id))
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum(&self) -> Var<'g, T> {
        let ones = vec![1; self.shape().len()];
        self.sum_to(&ones).reshape(&[])
    }

    pub fn mean(&self) -> Var<'g, T> {
        let n = self.value().numel();
        self.sum().scale(T::one() / T::of(n as f64))
    }

    /// Convolution of `[B, C, W]` with weight `[O, C, K]`.
    pub fn conv1d(&self, w: Var<'g, T>, pad: usize) -> Var<'g, T> {
        let v = conv::conv1d(&self.value(), &w.value(), pad);
        self.binary(w, v, Op::Conv { x: self.id, w: w.id, pad })
    }

    /// Stride-1 transposed convolution of `[B, I, W]` with weight `[I, O, K]`
    /// giving `[B, O, W + K − 1 − 2·pad]`.
    pub fn conv_transpose1d(&self, w: Var<'g, T>, pad: usize) -> Var<'g, T> {
        let v = conv::conv1d_input_grad(&self.value(), &w.value(), pad);
        self.binary(w, v, Op::ConvT { y: self.id, w: w.id, pad })
    }

    fn conv1d_weight_grad(&self, y: Var<'g, T>, pad: usize) -> Var<'g, T> {
        let v = conv::conv1d_weight_grad(&self.value(), &y.value(), pad);
        self.binary(y, v, Op::ConvWGrad { x: self.id, y: y.id, pad })
    }

    /// Select rows of a `[N, D]` table: result `[idx.len(), D]`.
    pub fn gather_rows(&self, idx: &Rc<[usize]>) -> Var<'g, T> {
        let table = self.value();
        let (rows, d) = (table.shape()[0], table.shape()[1]);
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx.iter() {
            assert!(i < rows, "gather index {i} out of range {rows}");
            out.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
        }
        let v = Tensor::new(&[idx.len(), d], out).expect("gather shape");
        self.unary(v, Op::Gather { table: self.id, idx: Rc::clone(idx) })
    }

    fn scatter_add_rows(&self, idx: &Rc<[usize]>, rows: usize) -> Var<'g, T> {
        let src = self.value();
        let d = src.shape()[1];
        let mut out = vec![T::zero(); rows * d];
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..d {
                out[i * d + j] = out[i * d + j] + src.data()[r * d + j];
            }
        }
        let v = Tensor::new(&[rows, d], out).expect("scatter shape");
        self.unary(v, Op::ScatterAdd { src: self.id, idx: Rc::clone(idx) })
    }

    /// Concatenate rank-3 tensors along axis 1.
    pub fn concat(parts: &[Var<'g, T>]) -> Var<'g, T> {
        assert!(!parts.is_empty(), "concat of nothing");
        let graph = parts[0].graph;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let (b, w) = (values[0].shape()[0], values[0].shape()[2]);
        let total: usize = values.iter().map(|v| v.shape()[1]).sum();
        let mut out = Vec::with_capacity(b * total * w);
        for bi in 0..b {
            for v in &values {
                assert!(v.shape()[0] == b && v.shape()[2] == w, "concat shape mismatch");
                let c = v.shape()[1];
                out.extend_from_slice(&v.data()[bi * c * w..(bi + 1) * c * w]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let v = Tensor::new(&[b, total, w], out).expect("concat shape");
        graph.push(v, Op::Concat { parts: ids.clone().into() }, &ids)
    }

    /// Channels `start..start+len` of a rank-3 tensor.
    pub fn narrow(&self, start: usize, len: usize) -> Var<'g, T> {
        let x = self.value();
        let (b, c, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        assert!(start + len <= c, "narrow out of range");
        let mut out = Vec::with_capacity(b * len * w);
        for bi in 0..b {
            out.extend_from_slice(&x.data()[(bi * c + start) * w..(bi * c + start + len) * w]);
        }
        let v = Tensor::new(&[b, len, w], out).expect("narrow shape");
        self.unary(v, Op::Narrow { x: self.id, start })
    }
}

impl<'g, T: Real> ops::Add for Var<'g, T> {
    type Output = Var<'g, T>;
    fn add(self, rhs: Self) -> Self::Output {
        self.check_same(&rhs, "add");
        let v = self.value().zip_map(&rhs.value(), |a, b| a + b);
        self.binary(rhs, v, Op::Add(self.id, rhs.id))
    }
}

impl<'g, T: Real> ops::Sub for Var<'g, T> {
    type Output = Var<'g, T>;
    fn sub(self, rhs: Self) -> Self::Output {
        self.check_same(&rhs, "sub");
        let v = self.value().zip_map(&rhs.value(), |a, b| a - b);
        self.binary(rhs, v, Op::Sub(self.id, rhs.id))
    }
}

impl<'g, T: Real> ops::Mul for Var<'g, T> {
    type Output = Var<'g, T>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.check_same(&rhs, "mul");
        let v = self.value().zip_map(&rhs.value(), |a, b| a * b);
        self.binary(rhs, v, Op::Mul(self.id, rhs.id))
    }
}
