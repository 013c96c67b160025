//! Gated detail injection on top of the upsampled MS.

use rand::Rng;

use crate::autodiff::Backend;
use crate::error::{Error, Result};
use crate::params::{join, ConvLayer, ParamTree};
use crate::tensor::{ConvSpec, Scalar, Tensor};

/// How the fusion gate is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GateMode {
    #[default]
    Learned,
    /// `g ≡ 1`: inject the projected detail unattenuated.
    ForceOpen,
}

/// `ms_up + g ⊙ d` with `d = proj(feat)` and
/// `g = σ(gate2(relu(gate1([d, ms_up]))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dff<P> {
    pub proj: ConvLayer<P>,
    pub gate1: ConvLayer<P>,
    pub gate2: ConvLayer<P>,
}

impl<T: Scalar> Dff<Tensor<T>> {
    /// Zero projection, He `gate1`, zero `gate2` (so `g = 0.5` at start).
    pub fn init(features: usize, bands: usize, rng: &mut impl Rng) -> Self {
        Dff {
            proj: ConvLayer::zeros(ConvSpec::same(features, bands, 1)),
            gate1: ConvLayer::init(ConvSpec::same(2 * bands, bands, 1), rng),
            gate2: ConvLayer::zeros(ConvSpec::same(bands, bands, 1)),
        }
    }
}

impl<V: Clone> Dff<V> {
    /// Projected detail `d`.
    pub fn detail<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, feat: &V) -> Result<V> {
        self.proj.forward(b, feat)
    }

    pub fn gate<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, d: &V, ms_up: &V) -> Result<V> {
        let cat = b.concat_channels(d, ms_up)?;
        let h = b.relu(&self.gate1.forward(b, &cat)?);
        Ok(b.sigmoid(&self.gate2.forward(b, &h)?))
    }

    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, feat: &V, ms_up: &V, mode: GateMode) -> Result<V> {
        let (fs, ms) = (b.shape(feat), b.shape(ms_up));
        if fs.h != ms.h {
            return Err(Error::shape("pan_dff", "height", ms.h, fs.h));
        }
        if fs.w != ms.w {
            return Err(Error::shape("pan_dff", "width", ms.w, fs.w));
        }
        let d = self.detail(b, feat)?;
        let injected = match mode {
            GateMode::Learned => {
                let g = self.gate(b, &d, ms_up)?;
                b.hadamard(&g, &d)?
            }
            GateMode::ForceOpen => d,
        };
        b.add(ms_up, &injected)
    }
}

impl<P> ParamTree<P> for Dff<P> {
    type With<Q> = Dff<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Dff<Q> {
        Dff {
            proj: self.proj.map(f),
            gate1: self.gate1.map(f),
            gate2: self.gate2.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        self.proj.visit(&join(prefix, "proj"), f);
        self.gate1.visit(&join(prefix, "gate1"), f);
        self.gate2.visit(&join(prefix, "gate2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        self.proj.visit_mut(f);
        self.gate1.visit_mut(f);
        self.gate2.visit_mut(f);
    }
}
