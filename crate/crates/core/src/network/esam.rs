//! Edge spatial attention, shared between the PAN and MS inputs.

use rand::Rng;

use crate::autodiff::Backend;
use crate::error::Result;
use crate::params::{join, ConvLayer, ParamTree};
use crate::tensor::{ConvSpec, Scalar, Tensor};

const GATE_KERNEL: usize = 7;

/// Per-channel 3×3 Laplacian high-pass (centre 8, neighbours −1, ÷8).
///
/// Written as `9/8 · (x − mean₃ₓ₃(x))`, which is the same filter in the
/// interior. At the border the mean runs over in-bounds neighbours only, so
/// a constant image has zero response everywhere.
pub fn laplacian_highpass<T: Scalar, B: Backend<T>>(b: &B, x: &B::V) -> Result<B::V> {
    let mean = b.avg_pool_same(x, 3)?;
    let d = b.sub(x, &mean)?;
    Ok(b.scale(&d, T::from_f64c(9.0 / 8.0)))
}

/// `x + x ⊙ σ(conv₇ₓ₇([mean_c |hp|, max_c |hp|]))`.
///
/// The gate sees only channel-pooled statistics, so one set of weights
/// serves inputs of any channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct Esam<P> {
    pub gate: ConvLayer<P>,
}

impl<T: Scalar> Esam<Tensor<T>> {
    pub fn gate_spec() -> ConvSpec {
        ConvSpec::same(2, 1, GATE_KERNEL)
    }

    pub fn init(rng: &mut impl Rng) -> Self {
        Esam {
            gate: ConvLayer::init(Self::gate_spec(), rng),
        }
    }
}

impl<V: Clone> Esam<V> {
    /// Spatial mask `(n, 1, h, w)`.
    pub fn mask<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V) -> Result<V> {
        let hp = laplacian_highpass(b, x)?;
        let mag = b.abs(&hp);
        let stats = b.concat_channels(&b.channel_mean(&mag), &b.channel_max(&mag))?;
        let logits = self.gate.forward(b, &stats)?;
        Ok(b.sigmoid(&logits))
    }

    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V) -> Result<V> {
        let mask = self.mask(b, x)?;
        let boost = b.hadamard(x, &mask)?;
        b.add(x, &boost)
    }
}

impl<P> ParamTree<P> for Esam<P> {
    type With<Q> = Esam<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> Esam<Q> {
        Esam { gate: self.gate.map(f) }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        self.gate.visit(&join(prefix, "gate"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        self.gate.visit_mut(f);
    }
}
