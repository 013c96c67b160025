//! Raster pairs, file formats, reduced-resolution simulation and export.

mod array;
mod export;
mod manifest;
mod synth;
mod wald;

pub use array::{encode_npy, encode_rapt, load_array, save_array, save_npy, NpyDtype, RAPT_MAGIC};
pub use export::{export_png, percentile, render_bands, Stretch};
pub use manifest::{write_dataset, Manifest, ManifestEntry, Role};
pub use synth::{synth_dataset, synth_scene};
pub use wald::{blur_decimate, blur_plane, gaussian_taps, gnyq_sigma, reflect, wald_degrade, DegradeSpec, DEFAULT_MS_GNYQ, DEFAULT_PAN_GNYQ};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One scene: PAN `(1, 1, H, W)`, MS `(1, S, H/r, W/r)` and, for
/// reduced-resolution data, the reference HRMS `(1, S, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionPair<T> {
    pub pan: Tensor<T>,
    pub ms: Tensor<T>,
    pub reference: Option<Tensor<T>>,
    pub ratio: usize,
    /// Upper end of the radiometric range, e.g. 2047 for 11-bit products.
    pub radiometric_max: f64,
}

impl<T: Scalar> FusionPair<T> {
    pub fn bands(&self) -> usize {
        self.ms.shape().c
    }

    /// Check shapes against the ratio and values against `[0, radiometric_max]`.
    pub fn validate(&self) -> Result<()> {
        let (p, m, r) = (self.pan.shape(), self.ms.shape(), self.ratio);
        if p.n != 1 || m.n != 1 {
            return Err(Error::Data(format!("a pair holds one image; got batch {} / {}", p.n, m.n)));
        }
        if p.c != 1 {
            return Err(Error::Data(format!("pan must have 1 band, found {}", p.c)));
        }
        if r < 1 || p.h != m.h * r || p.w != m.w * r {
            return Err(Error::Data(format!(
                "pan {}×{} is not ratio {r} × ms {}×{}",
                p.h, p.w, m.h, m.w
            )));
        }
        if let Some(rf) = &self.reference {
            let s = rf.shape();
            if (s.n, s.c, s.h, s.w) != (1, m.c, p.h, p.w) {
                return Err(Error::Data(format!("reference shape {s} does not match pan {p} with {} bands", m.c)));
            }
        }
        if !(self.radiometric_max > 0.0) {
            return Err(Error::Data(format!("radiometric max must be positive, got {}", self.radiometric_max)));
        }
        let hi = self.radiometric_max;
        let tensors = [Some(&self.pan), Some(&self.ms), self.reference.as_ref()];
        for (name, t) in ["pan", "ms", "reference"].iter().zip(tensors) {
            if let Some(t) = t {
                if let Some(v) = t.data().iter().map(|v| v.as_f64()).find(|v| !(0.0..=hi).contains(v)) {
                    return Err(Error::Data(format!("{name} value {v} outside [0, {hi}]")));
                }
            }
        }
        Ok(())
    }

    /// Same pair scaled to `[0, 1]`.
    pub fn normalized(&self) -> FusionPair<T> {
        let k = T::from_f64c(1.0 / self.radiometric_max);
        FusionPair {
            pan: self.pan.scale(k),
            ms: self.ms.scale(k),
            reference: self.reference.as_ref().map(|r| r.scale(k)),
            ratio: self.ratio,
            radiometric_max: 1.0,
        }
    }
}
