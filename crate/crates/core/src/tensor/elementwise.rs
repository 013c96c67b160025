use super::{check_same_shape, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        // Split on sign so exp never overflows.
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { T::zero() })
}

/// Subgradient at zero takes the non-negative branch (derivative 1).
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(dy, |v, g| if v >= T::zero() { g } else { T::zero() })
}

pub fn prelu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

/// Returns `(dx, dslope)`.
pub fn prelu_backward<T: Scalar>(x: &Tensor<T>, slope: T, dy: &Tensor<T>) -> Result<(Tensor<T>, T)> {
    let dx = x.zip_map(dy, |v, g| if v >= T::zero() { g } else { slope * g })?;
    let ds = x
        .data()
        .iter()
        .zip(dy.data())
        .fold(T::zero(), |acc, (&v, &g)| if v < T::zero() { acc + v * g } else { acc });
    Ok((dx, ds))
}

pub fn abs<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.abs())
}

/// Subgradient at zero is zero.
pub fn abs_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(dy, |v, g| {
        if v > T::zero() {
            g
        } else if v < T::zero() {
            -g
        } else {
            T::zero()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl BinaryOp {
    #[inline]
    fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        }
    }

    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "hadamard",
        }
    }
}

/// Result shape of broadcasting `a` with `b`: per axis the sizes must be
/// equal or one of them 1.
pub fn broadcast_shape(op: &'static str, a: Shape, b: Shape) -> Result<Shape> {
    let names = ["batch", "channels", "height", "width"];
    let (da, db) = (a.dims(), b.dims());
    let mut out = [0; 4];
    for k in 0..4 {
        out[k] = if da[k] == db[k] || db[k] == 1 {
            da[k]
        } else if da[k] == 1 {
            db[k]
        } else {
            return Err(Error::shape(op, names[k], da[k], db[k]));
        };
    }
    Ok(out.into())
}

fn strides_for(src: Shape) -> [usize; 4] {
    let d = src.dims();
    let full = [d[1] * d[2] * d[3], d[2] * d[3], d[3], 1];
    let mut s = [0; 4];
    for k in 0..4 {
        s[k] = if d[k] == 1 { 0 } else { full[k] };
    }
    s
}

/// Visit every output coordinate with the flat indices into `a` and `b`.
fn for_each_broadcast(out: Shape, a: Shape, b: Shape, mut f: impl FnMut(usize, usize, usize)) {
    let sa = strides_for(a);
    let sb = strides_for(b);
    let mut o = 0;
    for n in 0..out.n {
        for c in 0..out.c {
            for y in 0..out.h {
                let ia = n * sa[0] + c * sa[1] + y * sa[2];
                let ib = n * sb[0] + c * sb[1] + y * sb[2];
                for x in 0..out.w {
                    f(o, ia + x * sa[3], ib + x * sb[3]);
                    o += 1;
                }
            }
        }
    }
}

pub fn broadcast_binary<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: BinaryOp) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return a.zip_map(b, |x, y| op.apply(x, y));
    }
    let out_shape = broadcast_shape(op.name(), a.shape(), b.shape())?;
    let mut out = vec![T::zero(); out_shape.numel()];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(out_shape, a.shape(), b.shape(), |o, ia, ib| {
        out[o] = op.apply(ad[ia], bd[ib]);
    });
    let t = Tensor::from_vec(out_shape, out)?;
    Ok(t)
}

/// Gradients of [`broadcast_binary`], reduced back onto each operand's shape.
pub fn broadcast_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
    op: BinaryOp,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let out_shape = broadcast_shape(op.name(), a.shape(), b.shape())?;
    check_same_shape(op.name(), out_shape, dy.shape())?;
    let mut da = vec![T::zero(); a.numel()];
    let mut db = vec![T::zero(); b.numel()];
    let (ad, bd, g) = (a.data(), b.data(), dy.data());
    for_each_broadcast(out_shape, a.shape(), b.shape(), |o, ia, ib| {
        let gv = g[o];
        match op {
            BinaryOp::Add => {
                da[ia] = da[ia] + gv;
                db[ib] = db[ib] + gv;
            }
            BinaryOp::Sub => {
                da[ia] = da[ia] + gv;
                db[ib] = db[ib] - gv;
            }
            BinaryOp::Mul => {
                da[ia] = da[ia] + gv * bd[ib];
                db[ib] = db[ib] + gv * ad[ia];
            }
        }
    });
    Ok((Tensor::from_vec(a.shape(), da)?, Tensor::from_vec(b.shape(), db)?))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    broadcast_binary(a, b, BinaryOp::Add)
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    broadcast_binary(a, b, BinaryOp::Sub)
}

pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    broadcast_binary(a, b, BinaryOp::Mul)
}

/// Repeat an `(n, c, 1, 1)` tensor over an `h × w` grid.
pub fn broadcast_hw<T: Scalar>(v: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = v.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::invalid("broadcast_hw", format!("expected (n, c, 1, 1), got {s}")));
    }
    let mut out = Vec::with_capacity(s.n * s.c * h * w);
    for &val in v.data() {
        out.extend(std::iter::repeat(val).take(h * w));
    }
    Tensor::from_vec([s.n, s.c, h, w], out)
}

/// Stack channels of `a` then `b`; batch and spatial sizes must agree.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    for (dim, e, g) in [("batch", sa.n, sb.n), ("height", sa.h, sb.h), ("width", sa.w, sb.w)] {
        if e != g {
            return Err(Error::shape("concat_channels", dim, e, g));
        }
    }
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut out = Vec::with_capacity(a.numel() + b.numel());
    for n in 0..sa.n {
        out.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        out.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Tensor::from_vec([sa.n, sa.c + sb.c, sa.h, sa.w], out)
}

/// Mean over channels, keeping a singleton channel axis.
pub fn channel_mean<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::one() / T::from_usize(s.c).expect("channel count");
    Tensor::from_fn([s.n, 1, s.h, s.w], |n, _, y, xx| {
        let mut acc = T::zero();
        for c in 0..s.c {
            acc = acc + x.at(n, c, y, xx);
        }
        acc * inv
    })
}

/// Max over channels with the winning channel per pixel (first on ties).
pub fn channel_max<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let s = x.shape();
    let mut arg = Vec::with_capacity(s.n * s.plane());
    let t = Tensor::from_fn([s.n, 1, s.h, s.w], |n, _, y, xx| {
        let mut best = x.at(n, 0, y, xx);
        let mut bi = 0;
        for c in 1..s.c {
            let v = x.at(n, c, y, xx);
            if v > best {
                best = v;
                bi = c;
            }
        }
        arg.push(bi);
        best
    });
    (t, arg)
}

pub fn channel_max_backward<T: Scalar>(input: Shape, argmax: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input);
    let mut k = 0;
    for n in 0..input.n {
        for y in 0..input.h {
            for x in 0..input.w {
                *dx.at_mut(n, argmax[k], y, x) = dy.at(n, 0, y, x);
                k += 1;
            }
        }
    }
    dx
}

/// Logical `(n, c, 3, 3, h, w)` view over an `(n, 9c, h, w)` attention tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionField<T> {
    inner: Tensor<T>,
}

impl<T: Scalar> AttentionField<T> {
    pub fn in_channels(&self) -> usize {
        self.inner.shape().c / 9
    }

    /// Weight for input channel `c`, kernel tap `(i, j)`, at pixel `(y, x)`.
    #[inline]
    pub fn get(&self, n: usize, c: usize, i: usize, j: usize, y: usize, x: usize) -> T {
        self.inner.at(n, 9 * c + 3 * i + j, y, x)
    }

    /// The 3×3 patch for channel `c` at pixel `(y, x)`.
    pub fn patch(&self, n: usize, c: usize, y: usize, x: usize) -> [[T; 3]; 3] {
        let mut p = [[T::zero(); 3]; 3];
        for (i, row) in p.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(n, c, i, j, y, x);
            }
        }
        p
    }

    pub fn as_tensor(&self) -> &Tensor<T> {
        &self.inner
    }
}

/// Reinterpret `(n, 9c, h, w)` as per-pixel 3×3 patches. Pure view: the
/// `(c, i, j)` channel split is exactly the storage order.
pub fn rearrange_9c_to_attention<T: Scalar>(a: Tensor<T>) -> Result<AttentionField<T>> {
    let c = a.shape().c;
    if c % 9 != 0 {
        return Err(Error::invalid("rearrange_9c_to_attention", format!("{c} channels not divisible by 9")));
    }
    Ok(AttentionField { inner: a })
}

pub fn attention_to_9c<T: Scalar>(a: AttentionField<T>) -> Tensor<T> {
    a.inner
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activation_values() {
        let t = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.0, -3.0, 3.0]).unwrap();
        assert_eq!(sigmoid(&t).data()[0], 0.5);
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 3.0]);
        let p = Tensor::<f64>::scalar(-2.0);
        assert_eq!(prelu(&p, 0.25).item().unwrap(), -0.5);
        let big = Tensor::<f64>::from_vec([1, 1, 1, 2], vec![-800.0, 800.0]).unwrap();
        assert_eq!(sigmoid(&big).data(), &[0.0, 1.0]);
    }

    #[test]
    fn identities_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::rand_uniform([1, 3, 4, 4], -1.0, 1.0, &mut rng);
        assert_eq!(hadamard(&x, &Tensor::ones(x.shape())).unwrap(), x);
        assert_eq!(add(&x, &Tensor::zeros(x.shape())).unwrap(), x);
        let y = Tensor::<f64>::ones([1, 1, 4, 4]);
        assert_eq!(concat_channels(&x, &y).unwrap().shape(), Shape::new(1, 4, 4, 4));
        assert!(concat_channels(&x, &Tensor::ones([1, 1, 3, 4])).is_err());
        assert!(add(&x, &Tensor::ones([1, 2, 4, 4])).is_err());
    }

    #[test]
    fn broadcast_channel_and_spatial() {
        let x = Tensor::<f64>::from_fn([2, 3, 2, 2], |n, c, y, xx| (n * 100 + c * 10 + y * 2 + xx) as f64);
        let v = Tensor::<f64>::from_vec([2, 3, 1, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = add(&x, &v).unwrap();
        assert_eq!(s, add(&x, &broadcast_hw(&v, 2, 2).unwrap()).unwrap());
        let m = Tensor::<f64>::from_fn([2, 1, 2, 2], |n, _, y, xx| (n + y + xx) as f64);
        let p = hadamard(&x, &m).unwrap();
        assert_eq!(p.at(1, 2, 1, 1), x.at(1, 2, 1, 1) * 3.0);
    }

    #[test]
    fn rearrange_patch_layout() {
        let a = Tensor::<f64>::from_fn([1, 9, 2, 3], |_, c, _, _| c as f64);
        let f = rearrange_9c_to_attention(a.clone()).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(f.patch(0, 0, y, x), [[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0]]);
            }
        }
        assert_eq!(attention_to_9c(f), a);
        assert!(rearrange_9c_to_attention(Tensor::<f64>::ones([1, 8, 2, 2])).is_err());
    }

    #[test]
    fn rearrange_matches_index_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Tensor::<f64>::rand_uniform([2, 18, 3, 4], 0.0, 1.0, &mut rng);
        let f = rearrange_9c_to_attention(a.clone()).unwrap();
        for n in 0..2 {
            for c in 0..2 {
                for i in 0..3 {
                    for j in 0..3 {
                        for y in 0..3 {
                            for x in 0..4 {
                                let flat = (((n * 18 + 9 * c + 3 * i + j) * 3) + y) * 4 + x;
                                assert_eq!(f.get(n, c, i, j, y, x), a.data()[flat]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn channel_max_picks_first_on_ties() {
        let x = Tensor::<f64>::from_vec([1, 3, 1, 2], vec![1.0, 0.0, 1.0, 2.0, 0.5, 2.0]).unwrap();
        let (m, arg) = channel_max(&x);
        assert_eq!(m.data(), &[1.0, 2.0]);
        assert_eq!(arg, vec![0, 1]);
    }
}
