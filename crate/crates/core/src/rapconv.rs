//! Receptive-field adaptive convolution and the residual block built on it.
//!
//! For an input `x` with `C` channels, a RAPConv layer producing `P`
//! channels computes
//!
//! ```text
//! A      = sigmoid(grouped_conv1x1(avg_pool_3x3(x)))        (n, 9C, h, w)
//! y[p]   = Σ_{c,i,j} A[c,i,j](y,x) · K[p,c,i,j] · x[c, y+i−1, x+j−1]
//! out    = y + GHBM(x)                                       (n, P, h, w)
//! ```
//!
//! The grouped 1×1 convolution has `C` groups of nine filters, so the nine
//! attention taps for input channel `c` depend only on that channel. `A`
//! is read as a per-pixel 3×3 patch per input channel (see
//! [`AttentionField`]) and modulates the shared base kernel `K`, so the
//! effective kernel changes from pixel to pixel.
//!
//! The contraction is evaluated as unfold → Hadamard with `A` → 1×1
//! convolution with `K` reshaped to `(P, 9C, 1, 1)`. The Global Harmonic
//! Bias Module (GHBM) is a 1×1 bottleneck over globally pooled features
//! whose output is broadcast over the spatial grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Backend;
use crate::error::{Error, Result};
use crate::params::{he_uniform, join, ConvLayer, ParamTree};
use crate::tensor::{self, AttentionField, ConvSpec, Scalar, Shape, Tensor};

/// Side length of the adaptive kernel. Only 3×3 is supported.
pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RapConvMode {
    #[default]
    Adaptive,
    /// Attention forced to 1 and GHBM bias to 0: a plain 3×3 convolution
    /// with the base kernel. Test hook.
    DegenerateTest,
}

/// GHBM shape: number of 1×1 layers and hidden width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhbmConfig {
    pub depth: usize,
    /// Hidden width; `None` picks `max(C/2, 4)`.
    pub width: Option<usize>,
}

impl Default for GhbmConfig {
    fn default() -> Self {
        GhbmConfig { depth: 2, width: None }
    }
}

impl GhbmConfig {
    pub fn hidden_width(&self, in_channels: usize) -> usize {
        self.width.unwrap_or((in_channels / 2).max(4))
    }
}

/// Parameters of one RAPConv layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RapConv<P> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(P, C, 3, 3)` shared base kernel.
    pub base_kernel: P,
    /// `(9C, 1, 1, 1)` grouped 1×1 attention filters.
    pub attn_weight: P,
    /// `(1, 9C, 1, 1)`.
    pub attn_bias: P,
    /// 1×1 layers `C → M (→ M …) → P` with ReLU between them.
    pub ghbm: Vec<ConvLayer<P>>,
}

pub type RapConvParams<T> = RapConv<Tensor<T>>;

impl<P> RapConv<P> {
    pub fn attn_spec(&self) -> ConvSpec {
        ConvSpec {
            in_channels: self.in_channels,
            out_channels: TAPS * self.in_channels,
            kernel: (1, 1),
            stride: 1,
            padding: (0, 0),
            groups: self.in_channels,
        }
    }

    fn contraction_spec(&self) -> ConvSpec {
        ConvSpec::same(TAPS * self.in_channels, self.out_channels, 1)
    }
}

fn ghbm_specs(c: usize, p: usize, cfg: &GhbmConfig) -> Result<Vec<ConvSpec>> {
    if cfg.depth < 2 {
        return Err(Error::invalid("ghbm", format!("depth must be ≥ 2, got {}", cfg.depth)));
    }
    let m = cfg.hidden_width(c);
    let mut specs = vec![ConvSpec::same(c, m, 1)];
    for _ in 0..cfg.depth - 2 {
        specs.push(ConvSpec::same(m, m, 1));
    }
    specs.push(ConvSpec::same(m, p, 1));
    Ok(specs)
}

impl<T: Scalar> RapConv<Tensor<T>> {
    /// Base kernel He-uniform (fan-in 9C); attention filters and biases
    /// zero so the initial field is 0.5 everywhere; last GHBM layer zero so
    /// the initial bias is zero.
    pub fn init(in_channels: usize, out_channels: usize, ghbm: &GhbmConfig, rng: &mut impl Rng) -> Result<Self> {
        let specs = ghbm_specs(in_channels, out_channels, ghbm)?;
        let last = specs.len() - 1;
        let layers = specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| if i == last { ConvLayer::zeros(s) } else { ConvLayer::init(s, rng) })
            .collect();
        Ok(RapConv {
            in_channels,
            out_channels,
            base_kernel: he_uniform([out_channels, in_channels, KERNEL, KERNEL], TAPS * in_channels, rng),
            attn_weight: Tensor::zeros([TAPS * in_channels, 1, 1, 1]),
            attn_bias: Tensor::zeros([1, TAPS * in_channels, 1, 1]),
            ghbm: layers,
        })
    }

    /// Every tensor drawn uniformly from `[-scale, scale]`; for tests that
    /// need all branches active.
    pub fn random(in_channels: usize, out_channels: usize, ghbm: &GhbmConfig, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut layer = Self::init(in_channels, out_channels, ghbm, rng)?;
        layer.visit_mut(&mut |t: &mut Tensor<T>| *t = Tensor::rand_uniform(t.shape(), -scale, scale, rng));
        Ok(layer)
    }

    /// The per-pixel attention field for input `x`.
    pub fn attention_field(&self, x: &Tensor<T>) -> Result<AttentionField<T>> {
        let b = crate::autodiff::Eager;
        let a = self.attention(&b, x)?;
        tensor::rearrange_9c_to_attention(a)
    }
}

impl<V: Clone> RapConv<V> {
    fn check_input<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V) -> Result<Shape> {
        let s = b.shape(x);
        if s.c != self.in_channels {
            return Err(Error::shape("rapconv", "input channels", self.in_channels, s.c));
        }
        Ok(s)
    }

    /// `sigmoid(grouped_conv1x1(avg_pool_3x3(x)))`, shape `(n, 9C, h, w)`.
    pub fn attention<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V) -> Result<V> {
        self.check_input(b, x)?;
        let pooled = b.avg_pool_same(x, KERNEL)?;
        let logits = b.conv2d(&pooled, &self.attn_weight, Some(&self.attn_bias), &self.attn_spec())?;
        Ok(b.sigmoid(&logits))
    }

    /// Global Harmonic Bias Module: `(n, C, h, w) → (n, P, 1, 1)`.
    pub fn ghbm_forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V) -> Result<V> {
        self.check_input(b, x)?;
        let mut h = b.global_avg_pool(x);
        let last = self.ghbm.len() - 1;
        for (i, layer) in self.ghbm.iter().enumerate() {
            h = layer.forward(b, &h)?;
            if i != last {
                h = b.relu(&h);
            }
        }
        Ok(h)
    }

    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V, mode: RapConvMode) -> Result<V> {
        let s = self.check_input(b, x)?;
        let patches = b.unfold3x3(x);
        let modulated = match mode {
            RapConvMode::Adaptive => {
                let a = self.attention(b, x)?;
                b.hadamard(&a, &patches)?
            }
            RapConvMode::DegenerateTest => patches,
        };
        let kernel = b.reshape(&self.base_kernel, Shape::new(self.out_channels, TAPS * self.in_channels, 1, 1))?;
        let y = b.conv2d(&modulated, &kernel, None, &self.contraction_spec())?;
        match mode {
            RapConvMode::Adaptive => {
                let bias = self.ghbm_forward(b, x)?;
                let bias = b.broadcast_hw(&bias, s.h, s.w)?;
                b.add(&y, &bias)
            }
            RapConvMode::DegenerateTest => Ok(y),
        }
    }
}

impl<P> ParamTree<P> for RapConv<P> {
    type With<Q> = RapConv<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> RapConv<Q> {
        RapConv {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            base_kernel: f(&self.base_kernel),
            attn_weight: f(&self.attn_weight),
            attn_bias: f(&self.attn_bias),
            ghbm: self.ghbm.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        f(join(prefix, "base_kernel"), &self.base_kernel);
        f(join(prefix, "attn_weight"), &self.attn_weight);
        f(join(prefix, "attn_bias"), &self.attn_bias);
        self.ghbm.visit(&join(prefix, "ghbm"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        f(&mut self.base_kernel);
        f(&mut self.attn_weight);
        f(&mut self.attn_bias);
        self.ghbm.visit_mut(f);
    }
}

/// A 3×3 feature-to-feature layer in the backbone: adaptive, or a plain
/// convolution of the same shape when RAPConv is ablated.
#[derive(Clone, Debug, PartialEq)]
pub enum BackboneConv<P> {
    Adaptive(RapConv<P>),
    Plain(ConvLayer<P>),
}

impl<V: Clone> BackboneConv<V> {
    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V, mode: RapConvMode) -> Result<V> {
        match self {
            BackboneConv::Adaptive(l) => l.forward(b, x, mode),
            BackboneConv::Plain(l) => l.forward(b, x),
        }
    }

    fn channels(&self) -> (usize, usize) {
        match self {
            BackboneConv::Adaptive(l) => (l.in_channels, l.out_channels),
            BackboneConv::Plain(l) => (l.spec.in_channels, l.spec.out_channels),
        }
    }
}

impl<P> ParamTree<P> for BackboneConv<P> {
    type With<Q> = BackboneConv<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> BackboneConv<Q> {
        match self {
            BackboneConv::Adaptive(l) => BackboneConv::Adaptive(l.map(f)),
            BackboneConv::Plain(l) => BackboneConv::Plain(l.map(f)),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        match self {
            BackboneConv::Adaptive(l) => l.visit(prefix, f),
            BackboneConv::Plain(l) => l.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        match self {
            BackboneConv::Adaptive(l) => l.visit_mut(f),
            BackboneConv::Plain(l) => l.visit_mut(f),
        }
    }
}

/// `conv2(prelu(conv1(x))) + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct RapResBlock<P> {
    pub conv1: BackboneConv<P>,
    /// Single-element PReLU slope.
    pub slope: P,
    pub conv2: BackboneConv<P>,
}

impl<T: Scalar> RapResBlock<Tensor<T>> {
    /// PReLU slope starts at 0.25.
    pub fn init(features: usize, adaptive: bool, ghbm: &GhbmConfig, rng: &mut impl Rng) -> Result<Self> {
        let make = |rng: &mut _| -> Result<BackboneConv<Tensor<T>>> {
            Ok(if adaptive {
                BackboneConv::Adaptive(RapConv::init(features, features, ghbm, rng)?)
            } else {
                BackboneConv::Plain(ConvLayer::init(ConvSpec::same(features, features, KERNEL), rng))
            })
        };
        let conv1 = make(rng)?;
        let conv2 = make(rng)?;
        Ok(RapResBlock {
            conv1,
            slope: Tensor::scalar(T::from_f64c(0.25)),
            conv2,
        })
    }
}

impl<V: Clone> RapResBlock<V> {
    pub fn forward<T: Scalar, B: Backend<T, V = V>>(&self, b: &B, x: &V, mode: RapConvMode) -> Result<V> {
        for conv in [&self.conv1, &self.conv2] {
            let (c, p) = conv.channels();
            if c != p {
                return Err(Error::invalid("rap_resblock", format!("layer maps {c} → {p} channels; residual needs a square layer")));
            }
        }
        let h = self.conv1.forward(b, x, mode)?;
        let h = b.prelu(&h, &self.slope)?;
        let h = self.conv2.forward(b, &h, mode)?;
        b.add(&h, x)
    }
}

impl<P> ParamTree<P> for RapResBlock<P> {
    type With<Q> = RapResBlock<Q>;

    fn map<Q>(&self, f: &mut dyn FnMut(&P) -> Q) -> RapResBlock<Q> {
        RapResBlock {
            conv1: self.conv1.map(f),
            slope: f(&self.slope),
            conv2: self.conv2.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        f(join(prefix, "slope"), &self.slope);
        self.conv2.visit(&join(prefix, "conv2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut P)) {
        self.conv1.visit_mut(f);
        f(&mut self.slope);
        self.conv2.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{away_from_kinks, grad_check_many, Eager, Tape};
    use crate::params::{count, flatten};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Five-nested-loop reference straight from the defining sum.
    fn loop_oracle(layer: &RapConvParams<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let s = x.shape();
        let c_in = layer.in_channels;
        // attention: 3×3 in-bounds mean, then per-channel affine, sigmoid
        let mean = |n: usize, c: usize, y: usize, xx: usize| {
            let (mut acc, mut cnt) = (0.0, 0.0);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (yy, xq) = (y as i64 + dy, xx as i64 + dx);
                    if yy >= 0 && xq >= 0 && (yy as usize) < s.h && (xq as usize) < s.w {
                        acc += x.at(n, c, yy as usize, xq as usize);
                        cnt += 1.0;
                    }
                }
            }
            acc / cnt
        };
        let gap: Vec<Vec<f64>> = (0..s.n)
            .map(|n| (0..c_in).map(|c| x.plane(n, c).iter().sum::<f64>() / s.plane() as f64).collect())
            .collect();
        // dense GHBM
        let bias: Vec<Vec<f64>> = gap
            .iter()
            .map(|g| {
                let mut h = g.clone();
                for (li, l) in layer.ghbm.iter().enumerate() {
                    let (o, i) = (l.spec.out_channels, l.spec.in_channels);
                    let mut next = vec![0.0; o];
                    for (r, nv) in next.iter_mut().enumerate() {
                        *nv = l.bias.data()[r] + (0..i).map(|k| l.weight.data()[r * i + k] * h[k]).sum::<f64>();
                        if li + 1 != layer.ghbm.len() {
                            *nv = nv.max(0.0);
                        }
                    }
                    h = next;
                }
                h
            })
            .collect();
        Tensor::from_fn([s.n, layer.out_channels, s.h, s.w], |n, p, y, xx| {
            let mut acc = bias[n][p];
            for c in 0..c_in {
                let m = mean(n, c, y, xx);
                for i in 0..3 {
                    for j in 0..3 {
                        let ch = 9 * c + 3 * i + j;
                        let logit = layer.attn_weight.data()[ch] * m + layer.attn_bias.data()[ch];
                        let a = 1.0 / (1.0 + (-logit).exp());
                        let (yy, xq) = (y as i64 + i as i64 - 1, xx as i64 + j as i64 - 1);
                        if yy >= 0 && xq >= 0 && (yy as usize) < s.h && (xq as usize) < s.w {
                            acc += a * layer.base_kernel.at(p, c, i, j) * x.at(n, c, yy as usize, xq as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_loop_oracle() {
        for (seed, c, p, h, w) in [(0, 1, 1, 3, 3), (1, 2, 3, 5, 4), (2, 3, 2, 6, 6)] {
            let mut r = rng(seed);
            let layer = RapConvParams::<f64>::random(c, p, &GhbmConfig::default(), 1.0, &mut r).unwrap();
            let x = Tensor::rand_uniform([2, c, h, w], -1.0, 1.0, &mut r);
            let y = layer.forward(&Eager, &x, RapConvMode::Adaptive).unwrap();
            let diff = y.max_abs_diff(&loop_oracle(&layer, &x)).unwrap();
            assert!(diff < 1e-12, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn degenerate_mode_is_plain_conv() {
        let mut r = rng(3);
        let layer = RapConvParams::<f64>::random(3, 4, &GhbmConfig::default(), 1.0, &mut r).unwrap();
        let x = Tensor::rand_uniform([2, 3, 7, 5], -1.0, 1.0, &mut r);
        let y = layer.forward(&Eager, &x, RapConvMode::DegenerateTest).unwrap();
        let plain = tensor::conv2d(&x, &layer.base_kernel, None, &ConvSpec::same(3, 4, 3)).unwrap();
        assert!(y.max_abs_diff(&plain).unwrap() < 1e-12);
    }

    #[test]
    fn zero_kernel_leaves_only_the_bias() {
        let mut r = rng(4);
        let mut layer = RapConvParams::<f64>::random(2, 3, &GhbmConfig::default(), 1.0, &mut r).unwrap();
        layer.base_kernel = Tensor::zeros(layer.base_kernel.shape());
        let x = Tensor::rand_uniform([1, 2, 4, 4], -1.0, 1.0, &mut r);
        let y = layer.forward(&Eager, &x, RapConvMode::Adaptive).unwrap();
        let bias = layer.ghbm_forward(&Eager, &x).unwrap();
        assert_eq!(y, tensor::broadcast_hw(&bias, 4, 4).unwrap());
    }

    #[test]
    fn ghbm_zero_and_identity_cases() {
        let mut r = rng(5);
        let cfg = GhbmConfig { depth: 2, width: Some(3) };
        let mut layer = RapConvParams::<f64>::init(3, 3, &cfg, &mut r).unwrap();
        for l in &mut layer.ghbm {
            l.weight = Tensor::zeros(l.weight.shape());
        }
        let x = Tensor::rand_uniform([1, 3, 4, 4], -1.0, 1.0, &mut r);
        assert_eq!(layer.ghbm_forward(&Eager, &x).unwrap(), Tensor::zeros([1, 3, 1, 1]));

        for l in &mut layer.ghbm {
            l.weight = Tensor::from_fn([3, 3, 1, 1], |o, i, _, _| if o == i { 1.0 } else { 0.0 });
        }
        let consts = [0.7, -0.4, 2.0];
        let x = Tensor::from_fn([1, 3, 4, 4], |_, c, _, _| consts[c]);
        let out = layer.ghbm_forward(&Eager, &x).unwrap();
        for (o, c) in out.data().iter().zip(consts) {
            assert!((o - c.max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn ghbm_ignores_pixel_order() {
        let mut r = rng(6);
        let layer = RapConvParams::<f64>::random(2, 2, &GhbmConfig::default(), 1.0, &mut r).unwrap();
        let x = Tensor::rand_uniform([1, 2, 4, 4], -1.0, 1.0, &mut r);
        // transpose each plane: a spatial permutation
        let xt = Tensor::from_fn([1, 2, 4, 4], |n, c, y, xx| x.at(n, c, xx, y));
        let a = layer.ghbm_forward(&Eager, &x).unwrap();
        let b = layer.ghbm_forward(&Eager, &xt).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-14);
    }

    #[test]
    fn attention_field_is_spatially_adaptive() {
        let mut r = rng(7);
        let layer = RapConvParams::<f64>::random(1, 1, &GhbmConfig::default(), 1.0, &mut r).unwrap();
        let two_regions = Tensor::from_fn([1, 1, 8, 8], |_, _, _, x| if x < 4 { 0.0 } else { 1.0 });
        let a = layer.attention_field(&two_regions).unwrap();
        let p1 = a.patch(0, 0, 4, 1);
        let p2 = a.patch(0, 0, 4, 6);
        assert!(p1.iter().flatten().zip(p2.iter().flatten()).any(|(u, v)| (u - v).abs() > 0.0));
        assert!(a.as_tensor().data().iter().all(|&v| v > 0.0 && v < 1.0));

        let flat = Tensor::full([1, 1, 8, 8], 0.3);
        let a = layer.attention_field(&flat).unwrap();
        for ch in 0..9 {
            let plane = a.as_tensor().plane(0, ch);
            assert!(plane.iter().all(|&v| v == plane[0]));
        }
    }

    #[test]
    fn init_starts_as_half_scaled_conv() {
        let mut r = rng(8);
        let layer = RapConvParams::<f64>::init(2, 2, &GhbmConfig::default(), &mut r).unwrap();
        let x = Tensor::rand_uniform([1, 2, 5, 5], -1.0, 1.0, &mut r);
        let y = layer.forward(&Eager, &x, RapConvMode::Adaptive).unwrap();
        let plain = tensor::conv2d(&x, &layer.base_kernel, None, &ConvSpec::same(2, 2, 3)).unwrap();
        assert!(y.max_abs_diff(&plain.scale(0.5)).unwrap() < 1e-12);
    }

    #[test]
    fn resblock_zero_weights_is_identity_and_preserves_shape() {
        let mut r = rng(9);
        let mut block = RapResBlock::<Tensor<f64>>::init(16, true, &GhbmConfig::default(), &mut r).unwrap();
        let x = Tensor::rand_uniform([1, 16, 8, 8], -1.0, 1.0, &mut r);
        assert_eq!(block.forward(&Eager, &x, RapConvMode::Adaptive).unwrap().shape(), x.shape());
        block.visit_mut(&mut |t: &mut Tensor<f64>| *t = Tensor::zeros(t.shape()));
        assert_eq!(block.forward(&Eager, &x, RapConvMode::Adaptive).unwrap(), x);

        // skip path alone: d sum(out) / dx == 1
        let tape = Tape::new();
        let bound = block.map(&mut |t: &Tensor<f64>| tape.leaf(t.clone()));
        let xv = tape.leaf(x.clone());
        let out = bound.forward(&tape, &xv, RapConvMode::Adaptive).unwrap();
        let loss = tape.sum(&out);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(xv).unwrap(), &Tensor::ones(x.shape()));
    }

    #[test]
    fn resblock_rejects_non_square_layers() {
        let mut r = rng(10);
        let block = RapResBlock {
            conv1: BackboneConv::Adaptive(RapConvParams::<f64>::init(2, 3, &GhbmConfig::default(), &mut r).unwrap()),
            slope: Tensor::scalar(0.25),
            conv2: BackboneConv::Adaptive(RapConvParams::<f64>::init(3, 2, &GhbmConfig::default(), &mut r).unwrap()),
        };
        let x = Tensor::ones([1, 2, 4, 4]);
        assert!(block.forward(&Eager, &x, RapConvMode::Adaptive).is_err());
    }

    #[test]
    fn plain_block_has_fewer_parameters() {
        let mut r = rng(11);
        let cfg = GhbmConfig::default();
        let full = RapResBlock::<Tensor<f32>>::init(8, true, &cfg, &mut r).unwrap();
        let plain = RapResBlock::<Tensor<f32>>::init(8, false, &cfg, &mut r).unwrap();
        assert!(count(&full) > count(&plain));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut r = rng(100 + seed);
            let layer = RapConvParams::<f64>::random(2, 2, &GhbmConfig::default(), 0.8, &mut r).unwrap();
            let x = away_from_kinks(&Tensor::rand_uniform([1, 2, 5, 5], -1.0, 1.0, &mut r), 1e-3);
            let mut inputs = vec![x];
            inputs.extend(flatten(&layer).into_iter().cloned());
            let template = layer.clone();
            let report = grad_check_many(
                |tape, vars| {
                    let mut it = vars[1..].iter();
                    let bound = template.map(&mut |_| *it.next().unwrap());
                    let y = bound.forward(tape, &vars[0], RapConvMode::Adaptive)?;
                    let sq = tape.hadamard(&y, &y)?;
                    Ok(tape.sum(&sq))
                },
                &inputs,
                1e-5,
            )
            .unwrap();
            assert!(report.max_error() < 1e-4, "seed {seed}: {:?}", report);
        }
    }
}
