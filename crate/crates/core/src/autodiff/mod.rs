//! Tape-based reverse-mode automatic differentiation over the tensor ops.
//!
//! A [`Tape`] records every operation of a forward pass in creation order,
//! which is a valid topological order. [`Tape::backward`] walks it in
//! reverse and accumulates gradients into the leaves; calling it twice
//! without [`Tape::zero_grad`] accumulates twice.
//!
//! Network code is written once against the [`Backend`] trait and runs
//! either eagerly on plain tensors ([`Eager`], inference) or on a tape
//! (training and gradient checks).

mod backend;
mod gradcheck;
pub mod suite;

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{self, BinaryOp, ConvSpec, Scalar, Shape, Tensor, UpsampleMode};

pub use backend::{Backend, Eager};
pub(crate) use backend::mse_value;
pub use gradcheck::{away_from_kinks, grad_check, grad_check_many, norm_relative_error, relative_error, GradCheckReport};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Constant,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    AvgPoolSame { x: Var, k: usize },
    GlobalAvgPool { x: Var },
    Sigmoid { x: Var },
    Relu { x: Var },
    Prelu { x: Var, slope: Var },
    Abs { x: Var },
    UpsampleBilinear { x: Var, ratio: usize },
    Concat { a: Var, b: Var },
    Binary { a: Var, b: Var, op: BinaryOp },
    BroadcastHw { v: Var },
    Reshape { x: Var },
    Unfold3x3 { x: Var },
    ChannelMean { x: Var },
    ChannelMax { x: Var, argmax: Vec<usize> },
    Scale { x: Var, k: T },
    Sum { x: Var },
    Mse { a: Var, b: Var },
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of one forward computation.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    leaf_grads: RefCell<Vec<Option<Tensor<T>>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Accumulated leaf gradients after a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros of `shape` if nothing reached it.
    pub fn get_or_zeros(&self, v: Var, shape: Shape) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            leaf_grads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Differentiable input (parameter or input tensor).
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn rg(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    fn record(&self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let rg = self.rg(parents);
        self.push(value, op, rg)
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.leaf_grads.borrow().get(v.0).cloned().flatten()
    }

    pub fn zero_grad(&self) {
        self.leaf_grads.borrow_mut().clear();
    }

    /// Propagate d(loss)/d(·) to every differentiable leaf. `loss` must be
    /// a `(1, 1, 1, 1)` scalar.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.0].value.shape();
        if shape != Shape::scalar() {
            return Err(Error::invalid("backward", format!("loss must be scalar, got {shape}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(Shape::scalar()));

        let mut leaf_grads = self.leaf_grads.borrow_mut();
        if leaf_grads.len() < nodes.len() {
            leaf_grads.resize(nodes.len(), None);
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut leaf_grads[id] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            for (parent, pg) in local_grads(&nodes, node, &g)? {
                if !nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients {
            grads: leaf_grads.clone(),
        })
    }
}

/// Gradient contributions of one node to its parents.
fn local_grads<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
    let val = |v: &Var| -> &Tensor<T> { &nodes[v.0].value };
    let rg = |v: &Var| nodes[v.0].requires_grad;
    let out = match &node.op {
        Op::Leaf | Op::Constant => Vec::new(),
        Op::Conv2d { x, w, b, spec } => {
            let grads = tensor::conv2d_backward(val(x), val(w), g, spec, (rg(x), rg(w), b.is_some_and(|b| rg(&b))))?;
            let mut out = Vec::new();
            if let Some(dx) = grads.dx {
                out.push((*x, dx));
            }
            if let Some(dw) = grads.dw {
                out.push((*w, dw));
            }
            if let (Some(b), Some(db)) = (b, grads.db) {
                let shape = val(b).shape();
                out.push((*b, db.reshape(shape)?));
            }
            out
        }
        Op::AvgPoolSame { x, k } => vec![(*x, tensor::avg_pool_same_backward(g, *k)?)],
        Op::GlobalAvgPool { x } => {
            let s = val(x).shape();
            let inv = T::one() / T::from_usize(s.plane()).expect("plane");
            vec![(*x, tensor::broadcast_hw(&g.scale(inv), s.h, s.w)?)]
        }
        Op::Sigmoid { x } => {
            let y = &node.value;
            vec![(*x, y.zip_map(g, |s, gv| gv * s * (T::one() - s))?)]
        }
        Op::Relu { x } => vec![(*x, tensor::relu_backward(val(x), g)?)],
        Op::Prelu { x, slope } => {
            let a = val(slope).data()[0];
            let (dx, ds) = tensor::prelu_backward(val(x), a, g)?;
            vec![(*x, dx), (*slope, Tensor::full(val(slope).shape(), ds))]
        }
        Op::Abs { x } => vec![(*x, tensor::abs_backward(val(x), g)?)],
        Op::UpsampleBilinear { x, ratio } => vec![(*x, tensor::upsample_bilinear_backward(g, *ratio)?)],
        Op::Concat { a, b } => {
            let ca = val(a).shape().c;
            let cb = val(b).shape().c;
            vec![(*a, g.channels(0, ca)?), (*b, g.channels(ca, cb)?)]
        }
        Op::Binary { a, b, op } => {
            let (da, db) = tensor::broadcast_backward(val(a), val(b), g, *op)?;
            vec![(*a, da), (*b, db)]
        }
        Op::BroadcastHw { v } => {
            let s = g.shape();
            let summed = Tensor::from_fn([s.n, s.c, 1, 1], |n, c, _, _| g.plane(n, c).iter().fold(T::zero(), |a, &v| a + v));
            vec![(*v, summed)]
        }
        Op::Reshape { x } => vec![(*x, g.clone().reshape(val(x).shape())?)],
        Op::Unfold3x3 { x } => vec![(*x, tensor::unfold3x3_backward(g)?)],
        Op::ChannelMean { x } => {
            let s = val(x).shape();
            let inv = T::one() / T::from_usize(s.c).expect("channels");
            let ones = Tensor::ones(s);
            vec![(*x, tensor::hadamard(&ones, &g.scale(inv))?)]
        }
        Op::ChannelMax { x, argmax } => vec![(*x, tensor::channel_max_backward(val(x).shape(), argmax, g))],
        Op::Scale { x, k } => vec![(*x, g.scale(*k))],
        Op::Sum { x } => vec![(*x, Tensor::full(val(x).shape(), g.data()[0]))],
        Op::Mse { a, b } => {
            let (va, vb) = (val(a), val(b));
            let k = g.data()[0] * T::from_f64c(2.0) / T::from_usize(va.numel()).expect("numel");
            let d = va.zip_map(vb, |p, q| (p - q) * k)?;
            let nd = d.scale(-T::one());
            vec![(*a, d), (*b, nd)]
        }
    };
    Ok(out)
}

impl<T: Scalar> Backend<T> for Tape<T> {
    type V = Var;

    fn shape(&self, v: &Var) -> Shape {
        Tape::shape(self, *v)
    }

    fn constant(&self, t: Tensor<T>) -> Var {
        Tape::constant(self, t)
    }

    fn value(&self, v: &Var) -> Tensor<T> {
        (*Tape::value(self, *v)).clone()
    }

    fn conv2d(&self, x: &Var, w: &Var, b: Option<&Var>, spec: &ConvSpec) -> Result<Var> {
        let y = {
            let bv = b.map(|b| Tape::value(self, *b));
            tensor::conv2d(&Tape::value(self, *x), &Tape::value(self, *w), bv.as_deref(), spec)?
        };
        let mut parents = vec![*x, *w];
        parents.extend(b.copied());
        Ok(self.record(y, Op::Conv2d { x: *x, w: *w, b: b.copied(), spec: *spec }, &parents))
    }

    fn avg_pool_same(&self, x: &Var, k: usize) -> Result<Var> {
        let y = tensor::avg_pool_same(&Tape::value(self, *x), k)?;
        Ok(self.record(y, Op::AvgPoolSame { x: *x, k }, &[*x]))
    }

    fn global_avg_pool(&self, x: &Var) -> Var {
        let y = tensor::global_avg_pool(&Tape::value(self, *x));
        self.record(y, Op::GlobalAvgPool { x: *x }, &[*x])
    }

    fn sigmoid(&self, x: &Var) -> Var {
        let y = tensor::sigmoid(&Tape::value(self, *x));
        self.record(y, Op::Sigmoid { x: *x }, &[*x])
    }

    fn relu(&self, x: &Var) -> Var {
        let y = tensor::relu(&Tape::value(self, *x));
        self.record(y, Op::Relu { x: *x }, &[*x])
    }

    fn prelu(&self, x: &Var, slope: &Var) -> Result<Var> {
        let a = Tape::value(self, *slope);
        if a.numel() != 1 {
            return Err(Error::shape("prelu", "slope length", 1, a.numel()));
        }
        let y = tensor::prelu(&Tape::value(self, *x), a.data()[0]);
        Ok(self.record(y, Op::Prelu { x: *x, slope: *slope }, &[*x, *slope]))
    }

    fn abs(&self, x: &Var) -> Var {
        let y = tensor::abs(&Tape::value(self, *x));
        self.record(y, Op::Abs { x: *x }, &[*x])
    }

    fn upsample(&self, x: &Var, ratio: usize, mode: UpsampleMode) -> Result<Var> {
        let y = tensor::upsample(&Tape::value(self, *x), ratio, mode)?;
        match mode {
            UpsampleMode::Bilinear => Ok(self.record(y, Op::UpsampleBilinear { x: *x, ratio }, &[*x])),
            UpsampleMode::Poly23 => {
                if self.requires_grad(*x) {
                    return Err(Error::invalid("upsample", "poly23 interpolation is not differentiable"));
                }
                Ok(Tape::constant(self, y))
            }
        }
    }

    fn concat_channels(&self, a: &Var, b: &Var) -> Result<Var> {
        let y = tensor::concat_channels(&Tape::value(self, *a), &Tape::value(self, *b))?;
        Ok(self.record(y, Op::Concat { a: *a, b: *b }, &[*a, *b]))
    }

    fn binary(&self, a: &Var, b: &Var, op: BinaryOp) -> Result<Var> {
        let y = tensor::broadcast_binary(&Tape::value(self, *a), &Tape::value(self, *b), op)?;
        Ok(self.record(y, Op::Binary { a: *a, b: *b, op }, &[*a, *b]))
    }

    fn broadcast_hw(&self, v: &Var, h: usize, w: usize) -> Result<Var> {
        let y = tensor::broadcast_hw(&Tape::value(self, *v), h, w)?;
        Ok(self.record(y, Op::BroadcastHw { v: *v }, &[*v]))
    }

    fn reshape(&self, x: &Var, shape: Shape) -> Result<Var> {
        let y = (*Tape::value(self, *x)).clone().reshape(shape)?;
        Ok(self.record(y, Op::Reshape { x: *x }, &[*x]))
    }

    fn unfold3x3(&self, x: &Var) -> Var {
        let y = tensor::unfold3x3(&Tape::value(self, *x));
        self.record(y, Op::Unfold3x3 { x: *x }, &[*x])
    }

    fn channel_mean(&self, x: &Var) -> Var {
        let y = tensor::channel_mean(&Tape::value(self, *x));
        self.record(y, Op::ChannelMean { x: *x }, &[*x])
    }

    fn channel_max(&self, x: &Var) -> Var {
        let (y, argmax) = tensor::channel_max(&Tape::value(self, *x));
        self.record(y, Op::ChannelMax { x: *x, argmax }, &[*x])
    }

    fn scale(&self, x: &Var, k: T) -> Var {
        let y = Tape::value(self, *x).scale(k);
        self.record(y, Op::Scale { x: *x, k }, &[*x])
    }

    fn sum(&self, x: &Var) -> Var {
        let y = Tensor::scalar(Tape::value(self, *x).sum());
        self.record(y, Op::Sum { x: *x }, &[*x])
    }

    fn mse(&self, a: &Var, b: &Var) -> Result<Var> {
        let y = backend::mse_value(&Tape::value(self, *a), &Tape::value(self, *b))?;
        Ok(self.record(Tensor::scalar(y), Op::Mse { a: *a, b: *b }, &[*a, *b]))
    }
}
