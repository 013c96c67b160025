//! Reduced-resolution simulation: MTF-matched Gaussian blur, then decimation.
//!
//! A Gaussian with standard deviation σ has frequency response
//! `exp(−2π²σ²f²)`. Matching the gain `GNyq` at the Nyquist frequency of the
//! coarse grid, `f = 1/(2r)`, gives
//!
//! ```text
//! σ = (r / π) · sqrt(−2 · ln GNyq)
//! ```

use serde::{Deserialize, Serialize};

use super::FusionPair;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_MS_GNYQ: f64 = 0.3;
pub const DEFAULT_PAN_GNYQ: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeSpec {
    pub ratio: usize,
    /// Nyquist gain per MS band; a single value applies to every band.
    pub gnyq: Vec<f64>,
    /// Nyquist gain used when the PAN also has to be brought down a scale.
    pub pan_gnyq: f64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        DegradeSpec {
            ratio: 4,
            gnyq: vec![DEFAULT_MS_GNYQ],
            pan_gnyq: DEFAULT_PAN_GNYQ,
        }
    }
}

impl DegradeSpec {
    pub fn with_ratio(ratio: usize) -> Self {
        DegradeSpec {
            ratio,
            ..DegradeSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio < 2 {
            return Err(Error::Config(format!("degrade ratio must be ≥ 2, got {}", self.ratio)));
        }
        if self.gnyq.is_empty() {
            return Err(Error::Config("gnyq needs at least one value".into()));
        }
        for &g in self.gnyq.iter().chain([&self.pan_gnyq]) {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::Config(format!("Nyquist gain must lie in (0, 1), got {g}")));
            }
        }
        Ok(())
    }

    /// Per-band σ for `bands` bands.
    pub fn sigmas(&self, bands: usize) -> Result<Vec<f64>> {
        match self.gnyq.len() {
            1 => Ok(vec![gnyq_sigma(self.ratio, self.gnyq[0]); bands]),
            n if n == bands => Ok(self.gnyq.iter().map(|&g| gnyq_sigma(self.ratio, g)).collect()),
            n => Err(Error::Config(format!("{n} Nyquist gains given for {bands} bands"))),
        }
    }
}

pub fn gnyq_sigma(ratio: usize, gnyq: f64) -> f64 {
    ratio as f64 / std::f64::consts::PI * (-2.0 * gnyq.ln()).sqrt()
}

/// Normalised 1-D Gaussian taps, radius `ceil(4σ)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mirror index without repeating the edge sample (`−1 → 1`).
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

fn blur_line(src: &[f64], taps: &[f64], out: &mut [f64]) {
    let r = (taps.len() / 2) as isize;
    let n = src.len();
    for (i, o) in out.iter_mut().enumerate() {
        let c = src[i];
        // centred form: constants pass through bit-exact
        let mut acc = 0.0;
        for (k, &w) in taps.iter().enumerate() {
            acc += w * (src[reflect(i as isize + k as isize - r, n)] - c);
        }
        *o = c + acc;
    }
}

/// Separable Gaussian blur of one `h × w` plane with reflect padding.
pub fn blur_plane(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let taps = gaussian_taps(sigma);
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        blur_line(&plane[y * w..(y + 1) * w], &taps, &mut rows[y * w..(y + 1) * w]);
    }
    let mut out = vec![0.0; h * w];
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        blur_line(&col, &taps, &mut col_out);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    out
}

/// Blur each band with its σ, then keep pixels `r·k + r/2`.
pub fn blur_decimate<T: Scalar>(x: &Tensor<T>, sigmas: &[f64], ratio: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h % ratio != 0 {
        return Err(Error::Data(format!("height {} not divisible by ratio {ratio}", s.h)));
    }
    if s.w % ratio != 0 {
        return Err(Error::Data(format!("width {} not divisible by ratio {ratio}", s.w)));
    }
    if sigmas.len() != s.c {
        return Err(Error::shape("blur_decimate", "sigma count", s.c, sigmas.len()));
    }
    let (ho, wo) = (s.h / ratio, s.w / ratio);
    let off = ratio / 2;
    let mut out = Tensor::zeros([s.n, s.c, ho, wo]);
    for n in 0..s.n {
        for c in 0..s.c {
            let plane: Vec<f64> = x.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let b = blur_plane(&plane, s.h, s.w, sigmas[c]);
            let dst = out.plane_mut(n, c);
            for y in 0..ho {
                for xx in 0..wo {
                    dst[y * wo + xx] = T::from_f64c(b[(y * ratio + off) * s.w + xx * ratio + off]);
                }
            }
        }
    }
    Ok(out)
}

/// Build a reduced-resolution pair with `hrms` as reference.
///
/// A PAN at the reference size is kept as is; a PAN `ratio` times larger is
/// itself blurred and decimated with `pan_gnyq`.
pub fn wald_degrade<T: Scalar>(hrms: &Tensor<T>, pan: &Tensor<T>, spec: &DegradeSpec, radiometric_max: f64) -> Result<FusionPair<T>> {
    spec.validate()?;
    let (hs, ps, r) = (hrms.shape(), pan.shape(), spec.ratio);
    if hs.n != 1 || ps.n != 1 || ps.c != 1 {
        return Err(Error::Data(format!("expected one HRMS image and one single-band PAN, got {hs} and {ps}")));
    }
    let ms = blur_decimate(hrms, &spec.sigmas(hs.c)?, r)?;
    let pan = if (ps.h, ps.w) == (hs.h, hs.w) {
        pan.clone()
    } else if (ps.h, ps.w) == (hs.h * r, hs.w * r) {
        blur_decimate(pan, &[gnyq_sigma(r, spec.pan_gnyq)], r)?
    } else {
        return Err(Error::Data(format!(
            "PAN {}×{} must equal the HRMS size {}×{} or be {r} times larger",
            ps.h, ps.w, hs.h, hs.w
        )));
    };
    let pair = FusionPair {
        pan,
        ms,
        reference: Some(hrms.clone()),
        ratio: r,
        radiometric_max,
    };
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{upsample, UpsampleMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_matches_the_nyquist_gain() {
        let (r, g) = (4, 0.3);
        let s = gnyq_sigma(r, g);
        let f = 1.0 / (2.0 * r as f64);
        let gain = (-2.0 * std::f64::consts::PI.powi(2) * s * s * f * f).exp();
        assert!((gain - g).abs() < 1e-12);
        let taps = gaussian_taps(s);
        assert_eq!(taps.len(), 2 * (4.0 * s).ceil() as usize + 1);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn constants_survive_degrade_and_upsample() {
        let hrms = Tensor::<f64>::full([1, 3, 16, 16], 0.37);
        let pan = Tensor::full([1, 1, 16, 16], 0.5);
        let pair = wald_degrade(&hrms, &pan, &DegradeSpec::default(), 1.0).unwrap();
        assert_eq!(pair.ms.shape().dims(), [1, 3, 4, 4]);
        assert!(pair.ms.data().iter().all(|&v| v == 0.37));
        let up = upsample(&pair.ms, 4, UpsampleMode::Bilinear).unwrap();
        assert_eq!(up, hrms);
    }

    #[test]
    fn impulse_matches_direct_convolution() {
        let (h, w, r) = (24, 20, 4);
        let sigma = gnyq_sigma(r, 0.3);
        let mut x = Tensor::<f64>::zeros([1, 1, h, w]);
        *x.at_mut(0, 0, 11, 9) = 1.0;
        let ms = blur_decimate(&x, &[sigma], r).unwrap();
        // 2-D Gaussian sampled directly, away from the borders
        let taps = gaussian_taps(sigma);
        let rad = (taps.len() / 2) as isize;
        for y in 0..h / r {
            for xx in 0..w / r {
                let (cy, cx) = ((y * r + r / 2) as isize, (xx * r + r / 2) as isize);
                let (dy, dx) = (11 - cy, 9 - cx);
                let want = if dy.abs() <= rad && dx.abs() <= rad {
                    taps[(dy + rad) as usize] * taps[(dx + rad) as usize]
                } else {
                    0.0
                };
                assert!((ms.at(0, 0, y, xx) - want).abs() < 1e-15, "({y},{xx})");
            }
        }
    }

    #[test]
    fn full_scene_shape_and_pan_reduction() {
        let hrms = Tensor::<f32>::zeros([1, 8, 256, 256]);
        let pair = wald_degrade(&hrms, &Tensor::zeros([1, 1, 256, 256]), &DegradeSpec::default(), 2047.0).unwrap();
        assert_eq!(pair.ms.shape().dims(), [1, 8, 64, 64]);
        let big = wald_degrade(&hrms, &Tensor::zeros([1, 1, 1024, 1024]), &DegradeSpec::default(), 2047.0).unwrap();
        assert_eq!(big.pan.shape().dims(), [1, 1, 256, 256]);
        assert!(wald_degrade(&hrms, &Tensor::zeros([1, 1, 100, 100]), &DegradeSpec::default(), 1.0).is_err());
    }

    #[test]
    fn non_divisible_rejected() {
        let x = Tensor::<f64>::zeros([1, 1, 10, 12]);
        assert!(matches!(blur_decimate(&x, &[1.0], 4), Err(Error::Data(_))));
    }

    #[test]
    fn per_band_gains() {
        let spec = DegradeSpec {
            gnyq: vec![0.2, 0.3],
            ..DegradeSpec::default()
        };
        assert_eq!(spec.sigmas(2).unwrap().len(), 2);
        assert!(spec.sigmas(3).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hrms = Tensor::<f64>::rand_uniform([1, 2, 8, 8], 0.0, 1.0, &mut rng);
        assert!(wald_degrade(&hrms, &Tensor::zeros([1, 1, 8, 8]), &spec, 1.0).is_ok());
    }
}
