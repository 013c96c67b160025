use rayon::prelude::*;

use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" zero padding, one group.
    pub fn same(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: 1,
            padding: (k / 2, k / 2),
            groups: 1,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.groups;
        if g == 0 || self.in_channels % g != 0 || self.out_channels % g != 0 {
            return Err(Error::invalid(
                "conv2d",
                format!(
                    "channels {}→{} not divisible by groups {g}",
                    self.in_channels, self.out_channels
                ),
            ));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return Err(Error::invalid("conv2d", "kernel and stride must be ≥ 1"));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        )
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{w}"),
            ));
        }
        Ok((
            (h + 2 * ph - kh) / self.stride + 1,
            (w + 2 * pw - kw) / self.stride + 1,
        ))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == 1 && self.padding == (0, 0)
    }
}

/// Expand `c` channel planes of size `h×w` into a `(c·kh·kw) × (hout·wout)`
/// patch matrix. Row `(ci·kh + i)·kw + j` holds input pixel
/// `(y·stride + i − ph, x·stride + j − pw)` for output `(y, x)`, zero outside.
pub fn im2col<T: Scalar>(src: &[T], c: usize, h: usize, w: usize, spec: &ConvSpec, dst: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (ph, pw) = spec.padding;
    let (hout, wout) = spec.output_hw(h, w).expect("validated geometry");
    let cols = hout * wout;
    debug_assert_eq!(dst.len(), c * kh * kw * cols);
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = &mut dst[((ci * kh + i) * kw + j) * cols..][..cols];
                for y in 0..hout {
                    let sy = (y * spec.stride + i) as isize - ph as isize;
                    let out_row = &mut row[y * wout..(y + 1) * wout];
                    if sy < 0 || sy >= h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, o) in out_row.iter_mut().enumerate() {
                        let sx = (x * spec.stride + j) as isize - pw as isize;
                        *o = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src_row[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch rows back onto `c` planes.
pub fn col2im<T: Scalar>(cols_buf: &[T], c: usize, h: usize, w: usize, spec: &ConvSpec, dst: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (ph, pw) = spec.padding;
    let (hout, wout) = spec.output_hw(h, w).expect("validated geometry");
    let cols = hout * wout;
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = &cols_buf[((ci * kh + i) * kw + j) * cols..][..cols];
                for y in 0..hout {
                    let sy = (y * spec.stride + i) as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..wout {
                        let sx = (x * spec.stride + j) as isize - pw as isize;
                        if sx >= 0 && sx < w as isize {
                            dst_row[sx as usize] = dst_row[sx as usize] + row[y * wout + x];
                        }
                    }
                }
            }
        }
    }
}

fn check_conv<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    let xs = x.shape();
    if xs.c != spec.in_channels {
        return Err(Error::shape("conv2d", "input channels", spec.in_channels, xs.c));
    }
    let ws = weight.shape();
    let want = spec.weight_shape();
    let dims = [
        ("weight out-channels", want.n, ws.n),
        ("weight in-channels per group", want.c, ws.c),
        ("weight kernel height", want.h, ws.h),
        ("weight kernel width", want.w, ws.w),
    ];
    for (dim, e, a) in dims {
        if e != a {
            return Err(Error::shape("conv2d", dim, e, a));
        }
    }
    if let Some(b) = bias {
        if b.numel() != spec.out_channels {
            return Err(Error::shape("conv2d", "bias length", spec.out_channels, b.numel()));
        }
    }
    spec.output_hw(xs.h, xs.w)?;
    Ok(())
}

/// Direct (im2col + GEMM) 2-D convolution with optional per-channel bias.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    check_conv(x, weight, bias, spec)?;
    let xs = x.shape();
    let (hout, wout) = spec.output_hw(xs.h, xs.w)?;
    let g = spec.groups;
    let cg = spec.in_channels / g;
    let pg = spec.out_channels / g;
    let (kh, kw) = spec.kernel;
    let k = cg * kh * kw;
    let cols = hout * wout;
    let in_len = xs.c * xs.plane();
    let out_len = spec.out_channels * cols;
    let mut out = vec![T::zero(); xs.n * out_len];
    let wdata = weight.data();

    out.par_chunks_mut(out_len).enumerate().for_each(|(n, out_n)| {
        let x_n = &x.data()[n * in_len..(n + 1) * in_len];
        let mut patches = if spec.is_pointwise() { Vec::new() } else { vec![T::zero(); k * cols] };
        for gi in 0..g {
            let x_g = &x_n[gi * cg * xs.plane()..(gi + 1) * cg * xs.plane()];
            let b_mat: &[T] = if spec.is_pointwise() {
                x_g
            } else {
                im2col(x_g, cg, xs.h, xs.w, spec, &mut patches);
                &patches
            };
            let w_g = &wdata[gi * pg * k..(gi + 1) * pg * k];
            let c_g = &mut out_n[gi * pg * cols..(gi + 1) * pg * cols];
            T::gemm(pg, k, cols, w_g, (k as isize, 1), b_mat, (cols as isize, 1), T::zero(), c_g, cols as isize);
        }
        if let Some(b) = bias {
            for (p, plane) in out_n.chunks_mut(cols).enumerate() {
                let bv = b.data()[p];
                for v in plane {
                    *v = *v + bv;
                }
            }
        }
    });
    let out = Tensor::from_vec([xs.n, spec.out_channels, hout, wout], out)?;
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its inputs.
#[derive(Debug)]
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

/// Backward pass of [`conv2d`]. Per-sample weight gradients are summed in
/// batch order so the result does not depend on the thread count.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    spec: &ConvSpec,
    want: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    check_conv(x, weight, None, spec)?;
    let xs = x.shape();
    let (hout, wout) = spec.output_hw(xs.h, xs.w)?;
    let expect = Shape::new(xs.n, spec.out_channels, hout, wout);
    super::check_same_shape("conv2d_backward", expect, dy.shape())?;

    let g = spec.groups;
    let cg = spec.in_channels / g;
    let pg = spec.out_channels / g;
    let (kh, kw) = spec.kernel;
    let k = cg * kh * kw;
    let cols = hout * wout;
    let in_len = xs.c * xs.plane();
    let out_len = spec.out_channels * cols;
    let wdata = weight.data();
    let (want_dx, want_dw, want_db) = want;

    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let x_n = &x.data()[n * in_len..(n + 1) * in_len];
            let dy_n = &dy.data()[n * out_len..(n + 1) * out_len];
            let mut dx_n = if want_dx { vec![T::zero(); in_len] } else { Vec::new() };
            let mut dw_n = if want_dw { vec![T::zero(); wdata.len()] } else { Vec::new() };
            let mut patches = vec![T::zero(); k * cols];
            for gi in 0..g {
                let dy_g = &dy_n[gi * pg * cols..(gi + 1) * pg * cols];
                if want_dw {
                    let x_g = &x_n[gi * cg * xs.plane()..(gi + 1) * cg * xs.plane()];
                    let b_mat: &[T] = if spec.is_pointwise() {
                        x_g
                    } else {
                        im2col(x_g, cg, xs.h, xs.w, spec, &mut patches);
                        &patches
                    };
                    // dW_g (pg×k) = dY_g (pg×cols) · B^T (cols×k)
                    let dw_g = &mut dw_n[gi * pg * k..(gi + 1) * pg * k];
                    T::gemm(pg, cols, k, dy_g, (cols as isize, 1), b_mat, (1, cols as isize), T::zero(), dw_g, k as isize);
                }
                if want_dx {
                    let w_g = &wdata[gi * pg * k..(gi + 1) * pg * k];
                    let dx_g = &mut dx_n[gi * cg * xs.plane()..(gi + 1) * cg * xs.plane()];
                    if spec.is_pointwise() {
                        // dX_g (k×cols) = W_g^T (k×pg) · dY_g (pg×cols)
                        T::gemm(k, pg, cols, w_g, (1, k as isize), dy_g, (cols as isize, 1), T::zero(), dx_g, cols as isize);
                    } else {
                        T::gemm(k, pg, cols, w_g, (1, k as isize), dy_g, (cols as isize, 1), T::zero(), &mut patches, cols as isize);
                        col2im(&patches, cg, xs.h, xs.w, spec, dx_g);
                    }
                }
            }
            (dx_n, dw_n)
        })
        .collect();

    let dx = if want_dx {
        let mut data = Vec::with_capacity(xs.numel());
        for (dx_n, _) in &per_sample {
            data.extend_from_slice(dx_n);
        }
        Some(Tensor::from_vec(xs, data)?)
    } else {
        None
    };
    let dw = if want_dw {
        let mut acc = vec![T::zero(); wdata.len()];
        for (_, dw_n) in &per_sample {
            for (a, &v) in acc.iter_mut().zip(dw_n) {
                *a = *a + v;
            }
        }
        Some(Tensor::from_vec(weight.shape(), acc)?)
    } else {
        None
    };
    let db = if want_db {
        let mut acc = vec![T::zero(); spec.out_channels];
        for n in 0..xs.n {
            for (p, a) in acc.iter_mut().enumerate() {
                *a = *a + dy.plane(n, p).iter().fold(T::zero(), |s, &v| s + v);
            }
        }
        Some(Tensor::from_vec(spec.bias_shape(), acc)?)
    } else {
        None
    };
    Ok(ConvGrads { dx, dw, db })
}

/// 3×3 zero-padded neighbourhood expansion: `(n, c, h, w) → (n, 9c, h, w)`
/// with channel `9c + 3i + j` holding `x[c, y + i − 1, x + j − 1]`.
pub fn unfold3x3<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let spec = ConvSpec::same(s.c, s.c, 3);
    let in_len = s.c * s.plane();
    let mut out = vec![T::zero(); 9 * s.numel()];
    out.par_chunks_mut(9 * in_len).enumerate().for_each(|(n, o)| {
        im2col(&x.data()[n * in_len..(n + 1) * in_len], s.c, s.h, s.w, &spec, o);
    });
    Tensor::from_vec([s.n, 9 * s.c, s.h, s.w], out).expect("unfold shape")
}

/// Adjoint of [`unfold3x3`].
pub fn unfold3x3_backward<T: Scalar>(dy: &Tensor<T>) -> Result<Tensor<T>> {
    let s = dy.shape();
    if s.c % 9 != 0 {
        return Err(Error::invalid("unfold3x3_backward", format!("{} channels not divisible by 9", s.c)));
    }
    let c = s.c / 9;
    let spec = ConvSpec::same(c, c, 3);
    let in_len = c * s.plane();
    let mut out = vec![T::zero(); s.n * in_len];
    out.par_chunks_mut(in_len).enumerate().for_each(|(n, o)| {
        col2im(&dy.data()[n * 9 * in_len..(n + 1) * 9 * in_len], c, s.h, s.w, &spec, o);
    });
    Tensor::from_vec([s.n, c, s.h, s.w], out)
}
