//! Naive reference implementations shared by the integration tests.
#![allow(dead_code)]

use rapnet::{ConvSpec, Tensor};

/// Direct nested-loop grouped convolution with zero padding.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, spec: &ConvSpec) -> Tensor<f64> {
    let s = x.shape();
    let (kh, kw) = spec.kernel;
    let (ph, pw) = spec.padding;
    let ho = (s.h + 2 * ph - kh) / spec.stride + 1;
    let wo = (s.w + 2 * pw - kw) / spec.stride + 1;
    let cg = spec.in_channels / spec.groups;
    let pg = spec.out_channels / spec.groups;
    Tensor::from_fn([s.n, spec.out_channels, ho, wo], |n, o, y, xx| {
        let g = o / pg;
        let mut acc = b.map_or(0.0, |b| b.data()[o]);
        for ci in 0..cg {
            for i in 0..kh {
                for j in 0..kw {
                    let iy = (y * spec.stride + i) as isize - ph as isize;
                    let ix = (xx * spec.stride + j) as isize - pw as isize;
                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                        continue;
                    }
                    acc += w.at(o, ci, i, j) * x.at(n, g * cg + ci, iy as usize, ix as usize);
                }
            }
        }
        acc
    })
}

/// `k × k` mean over the in-bounds part of each window.
pub fn naive_avg_pool(x: &Tensor<f64>, k: usize) -> Tensor<f64> {
    let s = x.shape();
    let r = (k / 2) as isize;
    Tensor::from_fn(s, |n, c, y, xx| {
        let (mut sum, mut cnt) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (yy, xq) = (y as isize + dy, xx as isize + dx);
                if yy >= 0 && xq >= 0 && (yy as usize) < s.h && (xq as usize) < s.w {
                    sum += x.at(n, c, yy as usize, xq as usize);
                    cnt += 1.0;
                }
            }
        }
        sum / cnt
    })
}

fn source_coord(o: usize, ratio: usize, len: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) / ratio as f64 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = if i0 + 1 < len { i0 + 1 } else { len - 1 };
    (i0, i1, src - i0 as f64)
}

/// Half-pixel-centre bilinear upsampling, edge-clamped, as a weighted sum.
pub fn naive_bilinear(x: &Tensor<f64>, ratio: usize) -> Tensor<f64> {
    let s = x.shape();
    Tensor::from_fn([s.n, s.c, s.h * ratio, s.w * ratio], |n, c, y, xx| {
        let (y0, y1, fy) = source_coord(y, ratio, s.h);
        let (x0, x1, fx) = source_coord(xx, ratio, s.w);
        (1.0 - fy) * (1.0 - fx) * x.at(n, c, y0, x0)
            + (1.0 - fy) * fx * x.at(n, c, y0, x1)
            + fy * (1.0 - fx) * x.at(n, c, y1, x0)
            + fy * fx * x.at(n, c, y1, x1)
    })
}

/// Universal image quality index as the product of correlation, luminance
/// and contrast terms, averaged over `block × block` tiles placed every `shift`.
pub fn uiqi_tiles(a: &[f64], b: &[f64], h: usize, w: usize, block: usize, shift: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    let mut by = 0;
    while by + block <= h {
        let mut bx = 0;
        while bx + block <= w {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for y in by..by + block {
                for x in bx..bx + block {
                    xs.push(a[y * w + x]);
                    ys.push(b[y * w + x]);
                }
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sx = (xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / (n - 1.0)).sqrt();
            let sy = (ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / (n - 1.0)).sqrt();
            let sxy = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (n - 1.0);
            let corr = sxy / (sx * sy);
            let lum = 2.0 * mx * my / (mx * mx + my * my);
            let con = 2.0 * sx * sy / (sx * sx + sy * sy);
            total += corr * lum * con;
            count += 1;
            bx += shift;
        }
        by += shift;
    }
    total / count as f64
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}
