//! Procedural scenes standing in for real satellite products.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wald::{blur_plane, wald_degrade, DegradeSpec};
use super::FusionPair;
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Sum of a few random low-frequency plane waves.
fn smooth_field(rng: &mut impl Rng, size: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.gen_range(0.5..2.5) / size as f64;
            let theta = rng.gen_range(0.0..PI);
            (freq * theta.cos(), freq * theta.sin(), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.3..1.0))
        })
        .collect();
    let mut f = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            f[y * size + x] = waves
                .iter()
                .map(|&(fx, fy, ph, a)| a * (2.0 * PI * (fx * x as f64 + fy * y as f64) + ph).sin())
                .sum();
        }
    }
    f
}

/// Piecewise-constant regions from two half-planes and a rectangle.
fn edge_field(rng: &mut impl Rng, size: usize) -> Vec<f64> {
    let s = size as f64;
    let lines: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let (cx, cy) = (rng.gen_range(0.2..0.8) * s, rng.gen_range(0.2..0.8) * s);
            (theta.cos(), theta.sin(), cx, cy)
        })
        .collect();
    let (rx0, ry0) = (rng.gen_range(0.0..0.6) * s, rng.gen_range(0.0..0.6) * s);
    let (rw, rh) = (rng.gen_range(0.15..0.4) * s, rng.gen_range(0.15..0.4) * s);
    let levels = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let mut f = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = 0.0;
            for (k, &(nx, ny, cx, cy)) in lines.iter().enumerate() {
                if (px - cx) * nx + (py - cy) * ny > 0.0 {
                    v += levels[k];
                }
            }
            if px >= rx0 && px < rx0 + rw && py >= ry0 && py < ry0 + rh {
                v += levels[2];
            }
            f[y * size + x] = v;
        }
    }
    f
}

/// Lightly smoothed white noise.
fn texture_field(rng: &mut impl Rng, size: usize) -> Vec<f64> {
    let noise: Vec<f64> = (0..size * size).map(|_| rng.gen_range(-1.0..1.0)).collect();
    blur_plane(&noise, size, size, 0.7)
}

/// Reference HRMS `(1, bands, size, size)` and PAN `(1, 1, size, size)`, both in `[0, 1]`.
pub fn synth_scene<T: Scalar>(rng: &mut impl Rng, size: usize, bands: usize) -> (Tensor<T>, Tensor<T>) {
    let smooth = smooth_field(rng, size);
    let edges = edge_field(rng, size);
    let tex = texture_field(rng, size);
    let n = size * size;
    let mut hrms = vec![0.0; bands * n];
    // Spatial structure is shared across bands with band-specific gains;
    // only the low-frequency `own` field is band-private.
    for b in 0..bands {
        let (a, e, t) = (rng.gen_range(0.4..1.0), rng.gen_range(0.4..1.0), rng.gen_range(0.2..0.4));
        let own = smooth_field(rng, size);
        for i in 0..n {
            hrms[b * n + i] = a * smooth[i] + e * edges[i] + 0.25 * own[i] + t * tex[i];
        }
    }
    let (lo, hi) = hrms.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    hrms.iter_mut().for_each(|v| *v = 0.05 + 0.9 * (*v - lo) / span);

    let weights: Vec<f64> = (0..bands).map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let detail = texture_field(rng, size);
    let pan: Vec<f64> = (0..n)
        .map(|i| {
            let mean: f64 = (0..bands).map(|b| weights[b] * hrms[b * n + i]).sum::<f64>() / wsum;
            (mean + 0.05 * detail[i]).clamp(0.0, 1.0)
        })
        .collect();
    let hrms = Tensor::from_vec([1, bands, size, size], hrms.into_iter().map(T::from_f64c).collect()).expect("sized");
    let pan = Tensor::from_vec([1, 1, size, size], pan.into_iter().map(T::from_f64c).collect()).expect("sized");
    (hrms, pan)
}

/// `count` reduced-resolution pairs with `size × size` references.
pub fn synth_dataset<T: Scalar>(seed: u64, count: usize, size: usize, bands: usize, spec: &DegradeSpec) -> Result<Vec<FusionPair<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (hrms, pan) = synth_scene::<T>(&mut rng, size, bands);
            wald_degrade(&hrms, &pan, spec, 1.0)
        })
        .collect()
}
