//! 8-bit PNG previews.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Percentile clip range for the linear stretch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stretch {
    pub low_pct: f64,
    pub high_pct: f64,
}

impl Default for Stretch {
    fn default() -> Self {
        Stretch {
            low_pct: 1.0,
            high_pct: 99.0,
        }
    }
}

/// Value at percentile `p` (linear interpolation between order statistics).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    } else {
        sorted[i]
    }
}

/// Interleaved 8-bit samples for the selected bands of image `0`.
pub fn render_bands<T: Scalar>(x: &Tensor<T>, bands: &[usize], stretch: Stretch) -> Result<Vec<u8>> {
    let s = x.shape();
    if bands.len() != 1 && bands.len() != 3 {
        return Err(Error::invalid("export_png", format!("select 1 or 3 bands, got {}", bands.len())));
    }
    if let Some(&b) = bands.iter().find(|&&b| b >= s.c) {
        return Err(Error::invalid("export_png", format!("band {b} out of range for {} bands", s.c)));
    }
    if !(0.0..100.0).contains(&stretch.low_pct) || !(stretch.low_pct < stretch.high_pct && stretch.high_pct <= 100.0) {
        return Err(Error::invalid("export_png", "percentiles must satisfy 0 ≤ low < high ≤ 100"));
    }
    let hw = s.h * s.w;
    let mut out = vec![0u8; hw * bands.len()];
    for (k, &b) in bands.iter().enumerate() {
        let plane: Vec<f64> = x.plane(0, b).iter().map(|v| v.as_f64()).collect();
        let mut sorted = plane.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = percentile(&sorted, stretch.low_pct);
        let hi = percentile(&sorted, stretch.high_pct);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, &v) in plane.iter().enumerate() {
            out[i * bands.len() + k] = (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(out)
}

pub fn export_png<T: Scalar>(path: &Path, x: &Tensor<T>, bands: &[usize], stretch: Stretch) -> Result<()> {
    let pixels = render_bands(x, bands, stretch)?;
    let s = x.shape();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), s.w as u32, s.h as u32);
    enc.set_color(if bands.len() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&pixels).map_err(png_err)?;
    w.finish().map_err(png_err)
}
