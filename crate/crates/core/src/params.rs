//! Parameter containers shared by every layer.
//!
//! Layers are generic over the parameter slot type `P`: `Tensor<T>` for
//! stored weights, [`crate::autodiff::Var`] once bound to a tape, and again
//! `Tensor<T>` for gradients and optimizer moments. [`ParamTree`] gives a
//! fixed traversal order used by the optimizer and the checkpoint format.

use rand::Rng;

use crate::autodiff::Backend;
use crate::error::Result;
use crate::tensor::{ConvSpec, Scalar, Shape, Tensor};

/// Fixed-order traversal and structure-preserving mapping of parameters.
pub trait ParamTree<P> {
    type With<Q>: ParamTree<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Self::With<Q>;

    /// Visit every parameter with a dotted name, in storage order.
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Flatten a tree into references, in traversal order.
pub fn flatten<P, R: ParamTree<P>>(tree: &R) -> Vec<&P> {
    let mut out = Vec::new();
    tree.visit("", &mut |_, p| out.push(p));
    out
}

pub fn names<P, R: ParamTree<P>>(tree: &R) -> Vec<String> {
    let mut out = Vec::new();
    tree.visit("", &mut |n, _| out.push(n));
    out
}

/// Total scalar parameter count.
pub fn count<T: Scalar, R: ParamTree<Tensor<T>>>(tree: &R) -> usize {
    flatten(tree).iter().map(|t| t.numel()).sum()
}

/// He-uniform initialisation: `U(−√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform<T: Scalar>(shape: impl Into<Shape>, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

/// Convolution weight + bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<P> {
    pub spec: ConvSpec,
    pub weight: P,
    pub bias: P,
}

impl<T: Scalar> ConvLayer<Tensor<T>> {
    /// He-uniform weights, zero bias.
    pub fn init(spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let fan_in = spec.in_channels / spec.groups * spec.kernel.0 * spec.kernel.1;
        ConvLayer {
            spec,
            weight: he_uniform(spec.weight_shape(), fan_in, rng),
            bias: Tensor::zeros(spec.bias_shape()),
        }
    }

    pub fn zeros(spec: ConvSpec) -> Self {
        ConvLayer {
            spec,
            weight: Tensor::zeros(spec.weight_shape()),
            bias: Tensor::zeros(spec.bias_shape()),
        }
    }
}

impl<V: Clone> ConvLayer<V> {
    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V) -> Result<V> {
        b.conv2d(x, &self.weight, Some(&self.bias), &self.spec)
    }
}

impl<P> ParamTree<P> for ConvLayer<P> {
    type With<Q> = ConvLayer<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> ConvLayer<Q> {
        ConvLayer {
            spec: self.spec,
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

impl<P, R: ParamTree<P>> ParamTree<P> for Vec<R> {
    type With<Q> = Vec<R::With<Q>>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Self::With<Q> {
        self.iter().map(|r| r.map(f)).collect()
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        for (i, r) in self.iter().enumerate() {
            r.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        for r in self {
            r.visit_mut(f);
        }
    }
}
