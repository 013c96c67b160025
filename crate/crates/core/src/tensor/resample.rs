use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Interpolation used to bring MS bands onto the PAN grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    /// Separable linear interpolation, half-pixel centres (align-corners off).
    #[default]
    Bilinear,
    /// 23-tap polynomial interpolator applied in dyadic stages.
    Poly23,
}

/// Half of the symmetric 23-tap polynomial kernel, centre first. Odd
/// offsets carry the interpolating taps, even offsets (other than 0) are 0.
const POLY23_HALF: [f64; 12] = [
    0.5,
    0.305334091185,
    0.0,
    -0.072698593239,
    0.0,
    0.021809577942,
    0.0,
    -0.005192756653,
    0.0,
    0.000807762146,
    0.0,
    -0.000060081482,
];

/// The full 23-tap kernel including the ×2 interpolation gain.
///
/// The published taps sum to 1 − 4·10⁻¹⁰ on the interpolating phase; they
/// are rescaled so both phases sum to exactly 1 and constants survive.
pub fn poly23_kernel() -> [f64; 23] {
    let odd_sum: f64 = POLY23_HALF.iter().skip(1).sum();
    let mut k = [0.0; 23];
    k[11] = 1.0;
    for (d, &v) in POLY23_HALF.iter().enumerate().skip(1) {
        let tap = v / (2.0 * odd_sum);
        k[11 + d] = tap;
        k[11 - d] = tap;
    }
    k
}

/// Upsample every plane by an integer `ratio`.
pub fn upsample<T: Scalar>(x: &Tensor<T>, ratio: usize, mode: UpsampleMode) -> Result<Tensor<T>> {
    if ratio == 0 {
        return Err(Error::invalid("upsample", "ratio must be ≥ 1"));
    }
    match mode {
        UpsampleMode::Bilinear => Ok(bilinear(x, ratio)),
        UpsampleMode::Poly23 => {
            if !ratio.is_power_of_two() {
                return Err(Error::invalid("upsample", format!("poly23 needs a power-of-two ratio, got {ratio}")));
            }
            let mut cur = x.clone();
            let mut stage = 0;
            let mut r = ratio;
            while r > 1 {
                cur = poly23_stage(&cur, stage == 0);
                stage += 1;
                r /= 2;
            }
            Ok(cur)
        }
    }
}

/// Source taps `(i0, i1, frac)` for each output index along one axis.
fn linear_taps(len_in: usize, ratio: usize) -> Vec<(usize, usize, f64)> {
    let scale = 1.0 / ratio as f64;
    (0..len_in * ratio)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len_in - 1);
            let i1 = (i0 + 1).min(len_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

fn bilinear<T: Scalar>(x: &Tensor<T>, ratio: usize) -> Tensor<T> {
    let s = x.shape();
    let ty = linear_taps(s.h, ratio);
    let tx = linear_taps(s.w, ratio);
    let (ho, wo) = (s.h * ratio, s.w * ratio);
    let mut out = Tensor::zeros([s.n, s.c, ho, wo]);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            // lerp form: constant inputs come back bit-exact
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let wy = T::from_f64c(fy);
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let wx = T::from_f64c(fx);
                    let (a, b) = (src[y0 * s.w + x0], src[y0 * s.w + x1]);
                    let (c, d) = (src[y1 * s.w + x0], src[y1 * s.w + x1]);
                    let top = a + (b - a) * wx;
                    let bot = c + (d - c) * wx;
                    dst[oy * wo + ox] = top + (bot - top) * wy;
                }
            }
        }
    }
    out
}

/// Adjoint of bilinear upsampling; `input_hw` is the pre-upsample size.
pub fn upsample_bilinear_backward<T: Scalar>(dy: &Tensor<T>, ratio: usize) -> Result<Tensor<T>> {
    let s = dy.shape();
    if s.h % ratio != 0 || s.w % ratio != 0 {
        return Err(Error::invalid("upsample_backward", format!("{s} not divisible by ratio {ratio}")));
    }
    let (hi, wi) = (s.h / ratio, s.w / ratio);
    let ty = linear_taps(hi, ratio);
    let tx = linear_taps(wi, ratio);
    let mut dx = Tensor::zeros([s.n, s.c, hi, wi]);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = dy.plane(n, c);
            let dst = dx.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (wy0, wy1) = (T::from_f64c(1.0 - fy), T::from_f64c(fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (wx0, wx1) = (T::from_f64c(1.0 - fx), T::from_f64c(fx));
                    let gv = g[oy * s.w + ox];
                    let top = gv * wy0;
                    let bot = gv * wy1;
                    dst[y0 * wi + x0] = dst[y0 * wi + x0] + top * wx0;
                    dst[y0 * wi + x1] = dst[y0 * wi + x1] + top * wx1;
                    dst[y1 * wi + x0] = dst[y1 * wi + x0] + bot * wx0;
                    dst[y1 * wi + x1] = dst[y1 * wi + x1] + bot * wx1;
                }
            }
        }
    }
    Ok(dx)
}

/// Zero-insert ×2 then filter along one axis with circular boundaries.
/// The first stage places input samples on odd output indices, later
/// stages on even ones (the toolbox alignment for ratio-4 products).
fn poly23_line(src: &[f64], odd: bool, kernel: &[f64; 23], out: &mut [f64]) {
    let len = src.len() * 2;
    let mut z = vec![0.0; len];
    let off = usize::from(odd);
    for (i, &v) in src.iter().enumerate() {
        z[2 * i + off] = v;
    }
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &h) in kernel.iter().enumerate() {
            if h != 0.0 {
                let idx = (t as isize + k as isize - 11).rem_euclid(len as isize) as usize;
                acc += h * z[idx];
            }
        }
        *o = acc;
    }
}

fn poly23_stage<T: Scalar>(x: &Tensor<T>, first: bool) -> Tensor<T> {
    let kernel = poly23_kernel();
    let s = x.shape();
    let (ho, wo) = (s.h * 2, s.w * 2);
    let mut out = Tensor::zeros([s.n, s.c, ho, wo]);
    let mut rows = vec![0.0; s.h * wo];
    let mut col_in = vec![0.0; s.h];
    let mut col_out = vec![0.0; ho];
    let mut line = vec![0.0; s.w];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            for y in 0..s.h {
                for (xx, l) in line.iter_mut().enumerate() {
                    *l = src[y * s.w + xx].as_f64();
                }
                poly23_line(&line, first, &kernel, &mut rows[y * wo..(y + 1) * wo]);
            }
            let dst = out.plane_mut(n, c);
            for xx in 0..wo {
                for (y, v) in col_in.iter_mut().enumerate() {
                    *v = rows[y * wo + xx];
                }
                poly23_line(&col_in, first, &kernel, &mut col_out);
                for (y, &v) in col_out.iter().enumerate() {
                    dst[y * wo + xx] = T::from_f64c(v);
                }
            }
        }
    }
    out
}
