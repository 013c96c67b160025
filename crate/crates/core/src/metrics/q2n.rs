//! Hypercomplex quality index for 2ⁿ-band images.
//!
//! Pixels become Cayley–Dickson hypercomplex numbers of dimension
//! `N = 2ⁿ ≥ S` (missing bands are zero). Per block,
//!
//! ```text
//! σxy = E[x·ȳ] − E[x]·conj(E[y])
//! Q   = 4·|σxy|·|μx|·|μy| / ((σx² + σy²)·(|μx|² + |μy|²))
//! ```
//!
//! and the index is the mean of `Q` over blocks. With one band the algebra
//! is the reals and `Q` keeps its sign, which is plain UIQI.

use super::uiqi::uiqi_from_moments;

/// Cayley–Dickson conjugate: negate every imaginary component.
pub fn hc_conj(a: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = a.iter().map(|v| -v).collect();
    c[0] = a[0];
    c
}

/// Cayley–Dickson product `(a, b)(c, d) = (ac − d̄b, da + bc̄)`.
pub fn hc_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    debug_assert!(n.is_power_of_two());
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let h = n / 2;
    let (a, b) = x.split_at(h);
    let (c, d) = y.split_at(h);
    let ac = hc_mul(a, c);
    let db = hc_mul(&hc_conj(d), b);
    let da = hc_mul(d, a);
    let bc = hc_mul(b, &hc_conj(c));
    let mut out = Vec::with_capacity(n);
    out.extend(ac.iter().zip(&db).map(|(p, q)| p - q));
    out.extend(da.iter().zip(&bc).map(|(p, q)| p + q));
    out
}

pub fn hc_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Block quality from per-pixel hypercomplex samples `xs`, `ys` (each `N` long).
///
/// Two passes: means first, then moments of the centred samples, which
/// equal the `E[x·ȳ] − μx·μ̄y` form by bilinearity.
pub fn hc_block_quality(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let dim = xs[0].len();
    let np = xs.len() as f64;
    let mut mx = vec![0.0; dim];
    let mut my = vec![0.0; dim];
    for (x, y) in xs.iter().zip(ys) {
        for k in 0..dim {
            mx[k] += x[k];
            my[k] += y[k];
        }
    }
    mx.iter_mut().chain(my.iter_mut()).for_each(|v| *v /= np);
    let mut cov = vec![0.0; dim];
    let (mut vx, mut vy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let cx: Vec<f64> = x.iter().zip(&mx).map(|(a, m)| a - m).collect();
        let cy: Vec<f64> = y.iter().zip(&my).map(|(a, m)| a - m).collect();
        for (c, v) in cov.iter_mut().zip(hc_mul(&cx, &hc_conj(&cy))) {
            *c += v;
        }
        vx += cx.iter().map(|v| v * v).sum::<f64>();
        vy += cy.iter().map(|v| v * v).sum::<f64>();
    }
    cov.iter_mut().for_each(|v| *v /= np);
    let (vx, vy) = (vx / np, vy / np);
    if dim == 1 {
        return uiqi_from_moments(mx[0], my[0], vx, vy, cov[0]);
    }
    if vx + vy == 0.0 {
        return if mx == my { 1.0 } else { 0.0 };
    }
    // moduli throughout; the scalar sign has no hypercomplex analogue
    uiqi_from_moments(hc_norm(&mx), hc_norm(&my), vx, vy, hc_norm(&cov))
}
