//! Scalar universal image quality index on sliding windows.

/// UIQI from window moments, with the degenerate-window convention:
/// both variances zero gives 1 when the means agree and 0 otherwise;
/// both means zero makes the luminance term 1.
pub fn uiqi_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    let contrast = vx + vy;
    if contrast == 0.0 {
        return if mx == my { 1.0 } else { 0.0 };
    }
    let lum_den = mx * mx + my * my;
    let lum = if lum_den == 0.0 { 1.0 } else { 2.0 * mx * my / lum_den };
    2.0 * cxy / contrast * lum
}

/// Summed-area table with a zero first row and column.
fn integral(v: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += v[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn window_sum(s: &[f64], w: usize, y: usize, x: usize, b: usize) -> f64 {
    let w1 = w + 1;
    s[(y + b) * w1 + x + b] - s[y * w1 + x + b] - s[(y + b) * w1 + x] + s[y * w1 + x]
}

/// Mean UIQI over every `block × block` window at stride 1.
///
/// Moments come from summed-area tables of the globally mean-shifted
/// planes; the shift is added back for the luminance term.
pub fn uiqi_sliding(x: &[f64], y: &[f64], h: usize, w: usize, block: usize) -> f64 {
    assert!(block >= 1 && block <= h && block <= w, "window {block} larger than {h}×{w}");
    let n = (h * w) as f64;
    let (gx, gy) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let xs: Vec<f64> = x.iter().map(|v| v - gx).collect();
    let ys: Vec<f64> = y.iter().map(|v| v - gy).collect();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (sx, sy) = (integral(&xs, h, w), integral(&ys, h, w));
    let sxx = integral(&prod(&xs, &xs), h, w);
    let syy = integral(&prod(&ys, &ys), h, w);
    let sxy = integral(&prod(&xs, &ys), h, w);
    let nb = (block * block) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=h - block {
        for wx in 0..=w - block {
            let mx = window_sum(&sx, w, wy, wx, block) / nb;
            let my = window_sum(&sy, w, wy, wx, block) / nb;
            let vx = (window_sum(&sxx, w, wy, wx, block) / nb - mx * mx).max(0.0);
            let vy = (window_sum(&syy, w, wy, wx, block) / nb - my * my).max(0.0);
            let cxy = window_sum(&sxy, w, wy, wx, block) / nb - mx * my;
            total += uiqi_from_moments(mx + gx, my + gy, vx, vy, cxy);
            count += 1;
        }
    }
    total / count as f64
}
