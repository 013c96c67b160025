use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn window(center: usize, r: usize, len: usize) -> (usize, usize) {
    (center.saturating_sub(r), (center + r + 1).min(len))
}

/// `k × k` local mean, stride 1, same size. Out-of-bounds taps are
/// excluded from both the sum and the divisor. Evaluated as
/// `c + Σ(xᵢ − c) / count` around the centre value `c`, so constant inputs
/// come back bit-exact.
pub fn avg_pool_same<T: Scalar>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    if k % 2 == 0 {
        return Err(Error::invalid("avg_pool_same", format!("kernel size {k} must be odd")));
    }
    let s = x.shape();
    let r = k / 2;
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                let (y0, y1) = window(y, r, s.h);
                for xx in 0..s.w {
                    let (x0, x1) = window(xx, r, s.w);
                    let centre = src[y * s.w + xx];
                    let mut acc = T::zero();
                    for yy in y0..y1 {
                        for v in &src[yy * s.w + x0..yy * s.w + x1] {
                            acc = acc + (*v - centre);
                        }
                    }
                    let count = T::from_usize((y1 - y0) * (x1 - x0)).expect("count");
                    dst[y * s.w + xx] = centre + acc / count;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`avg_pool_same`].
pub fn avg_pool_same_backward<T: Scalar>(dy: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    if k % 2 == 0 {
        return Err(Error::invalid("avg_pool_same", format!("kernel size {k} must be odd")));
    }
    let s = dy.shape();
    let r = k / 2;
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = dy.plane(n, c);
            let dst = dx.plane_mut(n, c);
            for y in 0..s.h {
                let (y0, y1) = window(y, r, s.h);
                for xx in 0..s.w {
                    let (x0, x1) = window(xx, r, s.w);
                    let count = T::from_usize((y1 - y0) * (x1 - x0)).expect("count");
                    let share = g[y * s.w + xx] / count;
                    for yy in y0..y1 {
                        for v in &mut dst[yy * s.w + x0..yy * s.w + x1] {
                            *v = *v + share;
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Mean over each `(h, w)` plane → `(n, c, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::from_usize(s.plane()).expect("plane size");
    Tensor::from_fn([s.n, s.c, 1, 1], |n, c, _, _| {
        x.plane(n, c).iter().fold(T::zero(), |a, &v| a + v) / inv
    })
}
