//! Reduced-resolution (ERGAS, SAM, Q2ⁿ, SCC) and full-resolution
//! (D_λ, D_S, QNR) quality metrics. Everything is computed in f64.
//!
//! Images are `(1, S, H, W)` tensors.

mod q2n;
mod report;
mod uiqi;

use crate::data::{blur_decimate, gnyq_sigma, DEFAULT_PAN_GNYQ};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

pub use q2n::{hc_block_quality, hc_conj, hc_mul, hc_norm};
pub use report::{format_mean_std, FullMetrics, MetricsReport, ReducedMetrics, ReportKind, Summary};
pub use uiqi::{uiqi_from_moments, uiqi_sliding};

/// A metric value plus any degenerate-input notes.
#[derive(Clone, Debug, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub warnings: Vec<String>,
}

fn planes<T: Scalar>(x: &Tensor<T>) -> Vec<Vec<f64>> {
    (0..x.shape().c).map(|c| x.plane(0, c).iter().map(|v| v.as_f64()).collect()).collect()
}

fn check_pair<T: Scalar>(op: &'static str, f: &Tensor<T>, r: &Tensor<T>) -> Result<Shape> {
    let (a, b) = (f.shape(), r.shape());
    if a.n != 1 {
        return Err(Error::shape(op, "batch", 1, a.n));
    }
    for (dim, x, y) in [("batch", b.n, a.n), ("bands", b.c, a.c), ("height", b.h, a.h), ("width", b.w, a.w)] {
        if x != y {
            return Err(Error::shape(op, dim, x, y));
        }
    }
    Ok(a)
}

/// Angle between two vectors in radians, `2·atan2(‖û − v̂‖, ‖û + v̂‖)`;
/// exact zero for identical directions.
fn angle(u: &[f64], v: &[f64]) -> Option<f64> {
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let (mut d, mut s) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (p, q) = (a / nu, b / nv);
        d += (p - q) * (p - q);
        s += (p + q) * (p + q);
    }
    Some(2.0 * d.sqrt().atan2(s.sqrt()))
}

/// Spectral angle mapper in degrees, averaged over pixels where both
/// spectra are non-zero.
pub fn sam<T: Scalar>(fused: &Tensor<T>, reference: &Tensor<T>) -> Result<Flagged> {
    let s = check_pair("sam", fused, reference)?;
    if s.c < 2 {
        return Err(Error::invalid("sam", format!("needs at least 2 bands, got {}", s.c)));
    }
    let (f, r) = (planes(fused), planes(reference));
    let (mut total, mut used) = (0.0, 0usize);
    let mut u = vec![0.0; s.c];
    let mut v = vec![0.0; s.c];
    for i in 0..s.h * s.w {
        for b in 0..s.c {
            u[b] = f[b][i];
            v[b] = r[b][i];
        }
        if let Some(a) = angle(&u, &v) {
            total += a;
            used += 1;
        }
    }
    let mut warnings = Vec::new();
    let skipped = s.h * s.w - used;
    if used == 0 {
        warnings.push("sam: every pixel has a zero spectrum; reported as 0".to_string());
        return Ok(Flagged { value: 0.0, warnings });
    }
    if skipped > 0 {
        warnings.push(format!("sam: skipped {skipped} zero-spectrum pixels"));
    }
    Ok(Flagged {
        value: (total / used as f64).to_degrees(),
        warnings,
    })
}

/// `(100 / ratio) · sqrt(mean_b (RMSE_b / μ_b)²)` with `μ_b` the reference band mean.
pub fn ergas<T: Scalar>(fused: &Tensor<T>, reference: &Tensor<T>, ratio: usize) -> Result<f64> {
    let s = check_pair("ergas", fused, reference)?;
    if ratio == 0 {
        return Err(Error::invalid("ergas", "ratio must be ≥ 1"));
    }
    let (f, r) = (planes(fused), planes(reference));
    let n = (s.h * s.w) as f64;
    let mut acc = 0.0;
    for b in 0..s.c {
        let mu = r[b].iter().sum::<f64>() / n;
        if mu == 0.0 {
            return Err(Error::Data(format!("ergas: reference band {b} has zero mean")));
        }
        let mse = f[b].iter().zip(&r[b]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n;
        acc += mse / (mu * mu);
    }
    Ok(100.0 / ratio as f64 * (acc / s.c as f64).sqrt())
}

/// 3×3 Laplacian (centre 8, neighbours −1) over interior pixels only.
pub fn laplacian_valid(p: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h.saturating_sub(2) * w.saturating_sub(2));
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let mut nb = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    if (dy, dx) != (1, 1) {
                        nb += p[(y + dy - 1) * w + x + dx - 1];
                    }
                }
            }
            out.push(8.0 * p[y * w + x] - nb);
        }
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut c, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (p, q) = (x - ma, y - mb);
        c += p * q;
        va += p * p;
        vb += q * q;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((c / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Spatial correlation: Pearson correlation of Laplacian-filtered bands,
/// averaged over bands. Bands whose filtered image is constant are skipped.
pub fn scc<T: Scalar>(fused: &Tensor<T>, reference: &Tensor<T>) -> Result<Flagged> {
    let s = check_pair("scc", fused, reference)?;
    if s.h < 3 || s.w < 3 {
        return Err(Error::invalid("scc", format!("needs at least 3×3 pixels, got {}×{}", s.h, s.w)));
    }
    let (f, r) = (planes(fused), planes(reference));
    let mut warnings = Vec::new();
    let mut vals = Vec::new();
    for b in 0..s.c {
        let (hf, hr) = (laplacian_valid(&f[b], s.h, s.w), laplacian_valid(&r[b], s.h, s.w));
        match pearson(&hf, &hr) {
            Some(v) => vals.push(v),
            None => warnings.push(format!("scc: band {b} has a constant high-pass; skipped")),
        }
    }
    if vals.is_empty() {
        warnings.push("scc: no band had spatial detail; reported as 0".to_string());
        return Ok(Flagged { value: 0.0, warnings });
    }
    Ok(Flagged {
        value: vals.iter().sum::<f64>() / vals.len() as f64,
        warnings,
    })
}

/// Q2ⁿ averaged over `block × block` windows placed every `shift` pixels.
pub fn q2n<T: Scalar>(fused: &Tensor<T>, reference: &Tensor<T>, block: usize, shift: usize) -> Result<f64> {
    let s = check_pair("q2n", fused, reference)?;
    if block == 0 || shift == 0 {
        return Err(Error::invalid("q2n", "block and shift must be ≥ 1"));
    }
    if block > s.h || block > s.w {
        return Err(Error::invalid("q2n", format!("block {block} exceeds image {}×{}", s.h, s.w)));
    }
    let dim = s.c.next_power_of_two();
    let (f, r) = (planes(fused), planes(reference));
    let sample = |p: &[Vec<f64>], i: usize| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for (b, plane) in p.iter().enumerate() {
            v[b] = plane[i];
        }
        v
    };
    let (mut total, mut count) = (0.0, 0usize);
    for by in (0..=s.h - block).step_by(shift) {
        for bx in (0..=s.w - block).step_by(shift) {
            let mut xs = Vec::with_capacity(block * block);
            let mut ys = Vec::with_capacity(block * block);
            for y in by..by + block {
                for x in bx..bx + block {
                    xs.push(sample(&f, y * s.w + x));
                    ys.push(sample(&r, y * s.w + x));
                }
            }
            total += hc_block_quality(&xs, &ys);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Metric parameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub q_block: usize,
    pub q_shift: usize,
    /// Sliding-window size for the full-resolution UIQI terms; clamped to
    /// the smaller image side when larger.
    pub uiqi_block: usize,
    /// Nyquist gain used to bring the PAN down to MS scale for D_S.
    pub pan_gnyq: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            q_block: 32,
            q_shift: 32,
            uiqi_block: 32,
            pan_gnyq: DEFAULT_PAN_GNYQ,
        }
    }
}

/// All four reduced-resolution metrics.
pub fn reduced_metrics<T: Scalar>(fused: &Tensor<T>, reference: &Tensor<T>, ratio: usize, cfg: &MetricsConfig) -> Result<ReducedMetrics> {
    let e = ergas(fused, reference, ratio)?;
    let a = sam(fused, reference)?;
    let q = q2n(fused, reference, cfg.q_block, cfg.q_shift)?;
    let c = scc(fused, reference)?;
    let mut warnings = a.warnings;
    warnings.extend(c.warnings);
    Ok(ReducedMetrics {
        ergas: e,
        sam: a.value,
        q2n: q,
        scc: c.value,
        warnings,
    })
}

/// `(1 − D_λ)·(1 − D_S)`.
pub fn qnr(d_lambda: f64, d_s: f64) -> f64 {
    (1.0 - d_lambda) * (1.0 - d_s)
}

/// D_λ, D_S (p = q = 1) and QNR of a fused image against its own inputs.
pub fn full_res_metrics<T: Scalar>(
    fused: &Tensor<T>,
    ms: &Tensor<T>,
    pan: &Tensor<T>,
    ratio: usize,
    cfg: &MetricsConfig,
) -> Result<FullMetrics> {
    let (fs, ms_s, ps) = (fused.shape(), ms.shape(), pan.shape());
    if fs.n != 1 || ms_s.n != 1 || ps.n != 1 {
        return Err(Error::invalid("full_res_metrics", "expects single images"));
    }
    if ms_s.c != fs.c {
        return Err(Error::shape("full_res_metrics", "bands", fs.c, ms_s.c));
    }
    if ps.c != 1 {
        return Err(Error::shape("full_res_metrics", "pan channels", 1, ps.c));
    }
    if (ps.h, ps.w) != (fs.h, fs.w) {
        return Err(Error::shape("full_res_metrics", "pan size", fs.h, ps.h));
    }
    if (fs.h, fs.w) != (ms_s.h * ratio, ms_s.w * ratio) {
        return Err(Error::shape("full_res_metrics", "fused height (ratio × ms)", ms_s.h * ratio, fs.h));
    }
    let bands = fs.c;
    let (hi_b, lo_b) = (cfg.uiqi_block.min(fs.h).min(fs.w), cfg.uiqi_block.min(ms_s.h).min(ms_s.w));
    let (f, m) = (planes(fused), planes(ms));
    let p = planes(pan).remove(0);
    let pan_lr = blur_decimate(pan, &[gnyq_sigma(ratio, cfg.pan_gnyq)], ratio)?;
    let pl = planes(&pan_lr).remove(0);

    let mut d_lambda = 0.0;
    if bands > 1 {
        for i in 0..bands {
            for j in i + 1..bands {
                let qf = uiqi_sliding(&f[i], &f[j], fs.h, fs.w, hi_b);
                let qm = uiqi_sliding(&m[i], &m[j], ms_s.h, ms_s.w, lo_b);
                // each unordered pair stands for both orders
                d_lambda += 2.0 * (qf - qm).abs();
            }
        }
        d_lambda /= (bands * (bands - 1)) as f64;
    }
    let mut d_s = 0.0;
    for b in 0..bands {
        let qh = uiqi_sliding(&f[b], &p, fs.h, fs.w, hi_b);
        let ql = uiqi_sliding(&m[b], &pl, ms_s.h, ms_s.w, lo_b);
        d_s += (qh - ql).abs();
    }
    d_s /= bands as f64;
    Ok(FullMetrics {
        d_lambda,
        d_s,
        qnr: qnr(d_lambda, d_s),
    })
}
