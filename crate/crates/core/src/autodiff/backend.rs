use crate::error::Result;
use crate::tensor::{self, BinaryOp, ConvSpec, Scalar, Shape, Tensor, UpsampleMode};

/// The op set the network is written against.
///
/// [`Eager`] evaluates on tensors directly; [`super::Tape`] records the same
/// ops for reverse-mode differentiation.
pub trait Backend<T: Scalar> {
    type V: Clone;

    fn shape(&self, v: &Self::V) -> Shape;
    fn constant(&self, t: Tensor<T>) -> Self::V;
    fn value(&self, v: &Self::V) -> Tensor<T>;

    fn conv2d(&self, x: &Self::V, w: &Self::V, b: Option<&Self::V>, spec: &ConvSpec) -> Result<Self::V>;
    fn avg_pool_same(&self, x: &Self::V, k: usize) -> Result<Self::V>;
    fn global_avg_pool(&self, x: &Self::V) -> Self::V;
    fn sigmoid(&self, x: &Self::V) -> Self::V;
    fn relu(&self, x: &Self::V) -> Self::V;
    /// `slope` is a single-element tensor.
    fn prelu(&self, x: &Self::V, slope: &Self::V) -> Result<Self::V>;
    fn abs(&self, x: &Self::V) -> Self::V;
    fn upsample(&self, x: &Self::V, ratio: usize, mode: UpsampleMode) -> Result<Self::V>;
    fn concat_channels(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn binary(&self, a: &Self::V, b: &Self::V, op: BinaryOp) -> Result<Self::V>;
    fn broadcast_hw(&self, v: &Self::V, h: usize, w: usize) -> Result<Self::V>;
    fn reshape(&self, x: &Self::V, shape: Shape) -> Result<Self::V>;
    fn unfold3x3(&self, x: &Self::V) -> Self::V;
    fn channel_mean(&self, x: &Self::V) -> Self::V;
    fn channel_max(&self, x: &Self::V) -> Self::V;
    fn scale(&self, x: &Self::V, k: T) -> Self::V;
    fn sum(&self, x: &Self::V) -> Self::V;
    fn mse(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;

    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        self.binary(a, b, BinaryOp::Add)
    }

    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        self.binary(a, b, BinaryOp::Sub)
    }

    fn hadamard(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        self.binary(a, b, BinaryOp::Mul)
    }

    fn mean(&self, x: &Self::V) -> Self::V {
        let n = self.shape(x).numel();
        let s = self.sum(x);
        self.scale(&s, T::one() / T::from_usize(n).expect("numel"))
    }
}

pub(crate) fn mse_value<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    tensor::check_same_shape("mse", a.shape(), b.shape())?;
    let acc = a
        .data()
        .iter()
        .zip(b.data())
        .fold(T::zero(), |s, (&p, &q)| s + (p - q) * (p - q));
    Ok(acc / T::from_usize(a.numel()).expect("numel"))
}

/// Direct evaluation on owned tensors, no gradient bookkeeping.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl<T: Scalar> Backend<T> for Eager {
    type V = Tensor<T>;

    fn shape(&self, v: &Tensor<T>) -> Shape {
        v.shape()
    }

    fn constant(&self, t: Tensor<T>) -> Tensor<T> {
        t
    }

    fn value(&self, v: &Tensor<T>) -> Tensor<T> {
        v.clone()
    }

    fn conv2d(&self, x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, spec: &ConvSpec) -> Result<Tensor<T>> {
        tensor::conv2d(x, w, b, spec)
    }

    fn avg_pool_same(&self, x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
        tensor::avg_pool_same(x, k)
    }

    fn global_avg_pool(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::global_avg_pool(x)
    }

    fn sigmoid(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::sigmoid(x)
    }

    fn relu(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::relu(x)
    }

    fn prelu(&self, x: &Tensor<T>, slope: &Tensor<T>) -> Result<Tensor<T>> {
        if slope.numel() != 1 {
            return Err(crate::Error::shape("prelu", "slope length", 1, slope.numel()));
        }
        Ok(tensor::prelu(x, slope.data()[0]))
    }

    fn abs(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::abs(x)
    }

    fn upsample(&self, x: &Tensor<T>, ratio: usize, mode: UpsampleMode) -> Result<Tensor<T>> {
        tensor::upsample(x, ratio, mode)
    }

    fn concat_channels(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::concat_channels(a, b)
    }

    fn binary(&self, a: &Tensor<T>, b: &Tensor<T>, op: BinaryOp) -> Result<Tensor<T>> {
        tensor::broadcast_binary(a, b, op)
    }

    fn broadcast_hw(&self, v: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        tensor::broadcast_hw(v, h, w)
    }

    fn reshape(&self, x: &Tensor<T>, shape: Shape) -> Result<Tensor<T>> {
        x.clone().reshape(shape)
    }

    fn unfold3x3(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::unfold3x3(x)
    }

    fn channel_mean(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::channel_mean(x)
    }

    fn channel_max(&self, x: &Tensor<T>) -> Tensor<T> {
        tensor::channel_max(x).0
    }

    fn scale(&self, x: &Tensor<T>, k: T) -> Tensor<T> {
        x.scale(k)
    }

    fn sum(&self, x: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(x.sum())
    }

    fn mse(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Tensor::scalar(mse_value(a, b)?))
    }
}
