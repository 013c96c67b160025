//! The full pansharpening network.
//!
//! ```text
//! pan' = ESAM(pan)            ms' = ESAM(ms)          (shared parameters)
//! feat = tail(block⁴(head(concat(pan', up(ms')))))
//! out  = PAN-DFF(feat, up(ms))
//! ```
//!
//! `up` is bilinear by the PAN/MS ratio. The backbone runs at feature
//! width `F`; PAN-DFF projects to the `S` spectral bands and gates the
//! injected detail on top of the upsampled raw MS.

mod checkpoint;
mod dff;
mod esam;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Backend;
use crate::error::{Error, Result};
use crate::params::{join, ConvLayer, ParamTree};
use crate::rapconv::{GhbmConfig, RapConvMode, RapResBlock};
use crate::tensor::{ConvSpec, Scalar, Tensor, UpsampleMode};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dff::{Dff, GateMode};
pub use esam::{laplacian_highpass, Esam};

/// Number of RAP-ResBlocks in the backbone.
pub const NUM_BLOCKS: usize = 4;

/// Architecture hyperparameters, stored in every checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Spectral band count `S`.
    pub bands: usize,
    /// Backbone feature width `F`.
    pub features: usize,
    /// PAN / MS resolution ratio (power of two).
    pub ratio: usize,
    pub ghbm_depth: usize,
    /// GHBM hidden width; omitted means `max(F/2, 4)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ghbm_width: Option<usize>,
    /// `false` replaces every RAPConv with a plain 3×3 convolution.
    pub adaptive: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            bands: 8,
            features: 32,
            ratio: 4,
            ghbm_depth: 2,
            ghbm_width: None,
            adaptive: true,
        }
    }
}

impl NetworkConfig {
    pub fn ghbm(&self) -> GhbmConfig {
        GhbmConfig {
            depth: self.ghbm_depth,
            width: self.ghbm_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.features == 0 {
            return Err(Error::invalid("network", "bands and features must be ≥ 1"));
        }
        if self.ratio < 2 || !self.ratio.is_power_of_two() {
            return Err(Error::invalid("network", format!("ratio must be a power of two ≥ 2, got {}", self.ratio)));
        }
        if self.ghbm_depth < 2 {
            return Err(Error::invalid("network", format!("ghbm_depth must be ≥ 2, got {}", self.ghbm_depth)));
        }
        Ok(())
    }
}

/// All learnable parameters of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct RapNet<P> {
    pub config: NetworkConfig,
    pub esam: Esam<P>,
    pub head: ConvLayer<P>,
    pub blocks: Vec<RapResBlock<P>>,
    pub tail: ConvLayer<P>,
    pub dff: Dff<P>,
}

pub type RapNetParams<T> = RapNet<Tensor<T>>;

impl<T: Scalar> RapNet<Tensor<T>> {
    /// Seeded initialisation. PAN-DFF starts with a zero projection, so the
    /// untrained network returns the upsampled MS unchanged.
    pub fn init(config: NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (s, f) = (config.bands, config.features);
        let ghbm = config.ghbm();
        let esam = Esam::init(rng);
        let head = ConvLayer::init(ConvSpec::same(s + 1, f, 3), rng);
        let blocks = (0..NUM_BLOCKS)
            .map(|_| RapResBlock::init(f, config.adaptive, &ghbm, rng))
            .collect::<Result<Vec<_>>>()?;
        let tail = ConvLayer::init(ConvSpec::same(f, f, 3), rng);
        let dff = Dff::init(f, s, rng);
        Ok(RapNet {
            config,
            esam,
            head,
            blocks,
            tail,
            dff,
        })
    }

    /// Inference without gradient bookkeeping.
    pub fn fuse(&self, pan: &Tensor<T>, ms: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(&crate::autodiff::Eager, pan, ms)
    }
}

impl<V: Clone> RapNet<V> {
    fn check_inputs<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, pan: &V, ms: &V) -> Result<()> {
        let (ps, ms_s) = (b.shape(pan), b.shape(ms));
        let r = self.config.ratio;
        if ps.c != 1 {
            return Err(Error::shape("rapnet_forward", "pan channels", 1, ps.c));
        }
        if ms_s.c != self.config.bands {
            return Err(Error::shape("rapnet_forward", "ms bands", self.config.bands, ms_s.c));
        }
        if ps.n != ms_s.n {
            return Err(Error::shape("rapnet_forward", "batch", ps.n, ms_s.n));
        }
        if ps.h != ms_s.h * r {
            return Err(Error::shape("rapnet_forward", "pan height (ratio × ms height)", ms_s.h * r, ps.h));
        }
        if ps.w != ms_s.w * r {
            return Err(Error::shape("rapnet_forward", "pan width (ratio × ms width)", ms_s.w * r, ps.w));
        }
        Ok(())
    }

    /// Backbone features `(n, F, H, W)` from the enhanced inputs.
    pub fn backbone<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, pan: &V, ms: &V) -> Result<V> {
        self.check_inputs(b, pan, ms)?;
        let pan_e = self.esam.forward(b, pan)?;
        let ms_e = self.esam.forward(b, ms)?;
        let ms_up = b.upsample(&ms_e, self.config.ratio, UpsampleMode::Bilinear)?;
        let x = b.concat_channels(&pan_e, &ms_up)?;
        let mut h = self.head.forward(b, &x)?;
        for block in &self.blocks {
            h = block.forward(b, &h, RapConvMode::Adaptive)?;
        }
        self.tail.forward(b, &h)
    }

    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, pan: &V, ms: &V) -> Result<V> {
        self.forward_with_gate(b, pan, ms, GateMode::Learned)
    }

    pub fn forward_with_gate<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, pan: &V, ms: &V, gate: GateMode) -> Result<V> {
        let feat = self.backbone(b, pan, ms)?;
        let ms_up_raw = b.upsample(ms, self.config.ratio, UpsampleMode::Bilinear)?;
        self.dff.forward(b, &feat, &ms_up_raw, gate)
    }
}

impl<P> ParamTree<P> for RapNet<P> {
    type With<Q> = RapNet<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> RapNet<Q> {
        RapNet {
            config: self.config,
            esam: self.esam.map(f),
            head: self.head.map(f),
            blocks: self.blocks.map(f),
            tail: self.tail.map(f),
            dff: self.dff.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        self.esam.visit(&join(prefix, "esam"), f);
        self.head.visit(&join(prefix, "head"), f);
        self.blocks.visit(&join(prefix, "blocks"), f);
        self.tail.visit(&join(prefix, "tail"), f);
        self.dff.visit(&join(prefix, "dff"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        self.esam.visit_mut(f);
        self.head.visit_mut(f);
        self.blocks.visit_mut(f);
        self.tail.visit_mut(f);
        self.dff.visit_mut(f);
    }
}
