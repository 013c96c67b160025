//! The gradient-check battery: every differentiable op, a full RAPConv
//! layer, and a micro network, each against central differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{away_from_kinks, grad_check_many, Backend, Tape, Var};
use crate::error::Result;
use crate::network::{NetworkConfig, RapNet};
use crate::params::{flatten, ParamTree};
use crate::rapconv::{GhbmConfig, RapConv, RapConvMode};
use crate::tensor::{BinaryOp, ConvSpec, Shape, Tensor, UpsampleMode};

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Ops,
    Rapconv,
    Network,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub name: String,
    pub seed: u64,
    /// Largest tensor-wise relative error over the case's inputs.
    pub max_rel_error: f64,
    /// Largest component-wise relative error, for diagnostics.
    pub max_component_error: f64,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOL
    }
}

type Case = (String, Vec<Tensor<f64>>, Box<dyn Fn(&Tape<f64>, &[Var]) -> Result<Var>>);

/// `Σ out ⊙ w` for a fixed random `w`, so the upstream gradient is not uniform.
fn weighted_sum(t: &Tape<f64>, out: Var, w: &Tensor<f64>) -> Result<Var> {
    let w = Backend::constant(t, w.clone());
    let p = t.hadamard(&out, &w)?;
    Ok(t.sum(&p))
}

fn unary_case(
    name: &str,
    x: Tensor<f64>,
    out_shape: Shape,
    rng: &mut ChaCha8Rng,
    f: impl Fn(&Tape<f64>, Var) -> Result<Var> + 'static,
) -> Case {
    let w = Tensor::rand_uniform(out_shape, -1.0, 1.0, rng);
    (
        name.to_string(),
        vec![x],
        Box::new(move |t, v| {
            let out = f(t, v[0])?;
            weighted_sum(t, out, &w)
        }),
    )
}

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases = Vec::new();
    let x = |rng: &mut ChaCha8Rng, s: [usize; 4]| Tensor::<f64>::rand_uniform(s, -1.0, 1.0, rng);

    for (label, spec) in [
        ("conv2d", ConvSpec::same(3, 4, 3)),
        ("conv2d grouped", ConvSpec::same(4, 6, 3).with_groups(2)),
        (
            "conv2d strided",
            ConvSpec {
                stride: 2,
                ..ConvSpec::same(2, 3, 3)
            },
        ),
    ] {
        let xi = x(rng, [2, spec.in_channels, 5, 6]);
        let wi = x(rng, spec.weight_shape().dims());
        let bi = x(rng, spec.bias_shape().dims());
        let (ho, wo) = spec.output_hw(5, 6).expect("valid");
        let w = Tensor::rand_uniform([2, spec.out_channels, ho, wo], -1.0, 1.0, rng);
        cases.push((
            label.to_string(),
            vec![xi, wi, bi],
            Box::new(move |t: &Tape<f64>, v: &[Var]| {
                let out = t.conv2d(&v[0], &v[1], Some(&v[2]), &spec)?;
                weighted_sum(t, out, &w)
            }) as Box<dyn Fn(&Tape<f64>, &[Var]) -> Result<Var>>,
        ));
    }

    let s = [2, 3, 4, 5];
    let sh = Shape::from(s);
    cases.push(unary_case("avg_pool_same", x(rng, s), sh, rng, |t, v| t.avg_pool_same(&v, 3)));
    cases.push(unary_case("global_avg_pool", x(rng, s), Shape::new(2, 3, 1, 1), rng, |t, v| Ok(t.global_avg_pool(&v))));
    cases.push(unary_case("sigmoid", x(rng, s), sh, rng, |t, v| Ok(t.sigmoid(&v))));
    cases.push(unary_case("relu", away_from_kinks(&x(rng, s), 1e-3), sh, rng, |t, v| Ok(t.relu(&v))));
    cases.push(unary_case("abs", away_from_kinks(&x(rng, s), 1e-3), sh, rng, |t, v| Ok(t.abs(&v))));
    {
        let xi = away_from_kinks(&x(rng, s), 1e-3);
        let w = Tensor::rand_uniform(s, -1.0, 1.0, rng);
        cases.push((
            "prelu".into(),
            vec![xi, Tensor::scalar(0.25)],
            Box::new(move |t, v| {
                let out = t.prelu(&v[0], &v[1])?;
                weighted_sum(t, out, &w)
            }),
        ));
    }
    cases.push(unary_case("upsample bilinear", x(rng, [1, 2, 3, 4]), Shape::new(1, 2, 12, 16), rng, |t, v| {
        t.upsample(&v, 4, UpsampleMode::Bilinear)
    }));
    {
        let (a, b) = (x(rng, [2, 2, 3, 3]), x(rng, [2, 3, 3, 3]));
        let w = Tensor::rand_uniform([2, 5, 3, 3], -1.0, 1.0, rng);
        cases.push((
            "concat_channels".into(),
            vec![a, b],
            Box::new(move |t, v| {
                let out = t.concat_channels(&v[0], &v[1])?;
                weighted_sum(t, out, &w)
            }),
        ));
    }
    for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
        // second operand broadcast over batch and space
        let (a, b) = (x(rng, s), x(rng, [1, 3, 1, 1]));
        let w = Tensor::rand_uniform(s, -1.0, 1.0, rng);
        cases.push((
            format!("binary {op:?} broadcast"),
            vec![a, b],
            Box::new(move |t, v| {
                let out = t.binary(&v[0], &v[1], op)?;
                weighted_sum(t, out, &w)
            }),
        ));
    }
    cases.push(unary_case("broadcast_hw", x(rng, [2, 3, 1, 1]), Shape::new(2, 3, 4, 5), rng, |t, v| {
        t.broadcast_hw(&v, 4, 5)
    }));
    cases.push(unary_case("reshape", x(rng, s), Shape::new(2, 12, 5, 1), rng, |t, v| {
        t.reshape(&v, Shape::new(2, 12, 5, 1))
    }));
    cases.push(unary_case("unfold3x3", x(rng, [1, 2, 4, 5]), Shape::new(1, 18, 4, 5), rng, |t, v| Ok(t.unfold3x3(&v))));
    cases.push(unary_case("channel_mean", x(rng, s), Shape::new(2, 1, 4, 5), rng, |t, v| Ok(t.channel_mean(&v))));
    cases.push(unary_case("channel_max", x(rng, s), Shape::new(2, 1, 4, 5), rng, |t, v| Ok(t.channel_max(&v))));
    cases.push(unary_case("scale", x(rng, s), sh, rng, |t, v| Ok(t.scale(&v, -1.7))));
    cases.push(unary_case("sum", x(rng, s), Shape::scalar(), rng, |t, v| Ok(t.sum(&v))));
    {
        let (a, b) = (x(rng, s), x(rng, s));
        cases.push(("mse".into(), vec![a, b], Box::new(move |t, v| t.mse(&v[0], &v[1]))));
    }
    cases
}

fn rapconv_case(rng: &mut ChaCha8Rng) -> Result<Case> {
    let layer = RapConv::<Tensor<f64>>::random(3, 4, &GhbmConfig::default(), 0.5, rng)?;
    let x = Tensor::rand_uniform([2, 3, 5, 5], -1.0, 1.0, rng);
    let w = Tensor::rand_uniform([2, 4, 5, 5], -1.0, 1.0, rng);
    let mut inputs = vec![x];
    inputs.extend(flatten(&layer).into_iter().cloned());
    Ok((
        "rapconv layer".into(),
        inputs,
        Box::new(move |t, v| {
            let mut it = v[1..].iter();
            let bound = layer.map(&mut |_| *it.next().expect("one var per parameter"));
            let out = bound.forward(t, &v[0], RapConvMode::Adaptive)?;
            weighted_sum(t, out, &w)
        }),
    ))
}

/// Micro network: S = 2, F = 8, 8×8 PAN, ratio 2, all parameters random.
///
/// Weights are drawn at a variance-preserving scale `±√(3 / fan_in)` so
/// activations stay of order one; drawn at a fixed ±0.5 they grow through the
/// residual stack until the loss is in the thousands and the central
/// difference drowns in rounding noise.
fn network_case(rng: &mut ChaCha8Rng) -> Result<Case> {
    let cfg = NetworkConfig {
        bands: 2,
        features: 8,
        ratio: 2,
        ..NetworkConfig::default()
    };
    let mut net = RapNet::<Tensor<f64>>::init(cfg, rng)?;
    net.visit_mut(&mut |t: &mut Tensor<f64>| {
        let s = t.shape();
        let bound = if s.n > 1 { (3.0 / (s.c * s.h * s.w) as f64).sqrt() } else { 0.5 };
        *t = Tensor::rand_uniform(s, -bound, bound, rng);
    });
    let pan = Tensor::rand_uniform([1, 1, 8, 8], 0.0, 1.0, rng);
    let ms = Tensor::rand_uniform([1, 2, 4, 4], 0.0, 1.0, rng);
    let target = Tensor::rand_uniform([1, 2, 8, 8], 0.0, 1.0, rng);
    let inputs = flatten(&net).into_iter().cloned().collect();
    Ok((
        "network mse".into(),
        inputs,
        Box::new(move |t, v| {
            let mut it = v.iter();
            let bound = net.map(&mut |_| *it.next().expect("one var per parameter"));
            let p = Backend::constant(t, pan.clone());
            let m = Backend::constant(t, ms.clone());
            let y = Backend::constant(t, target.clone());
            let out = bound.forward(t, &p, &m)?;
            t.mse(&out, &y)
        }),
    ))
}

/// Run the battery for `scope` once per seed.
pub fn run_suite(scope: Scope, seeds: &[u64]) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cases = Vec::new();
        if matches!(scope, Scope::Ops | Scope::All) {
            cases.extend(op_cases(&mut rng));
        }
        if matches!(scope, Scope::Rapconv | Scope::All) {
            cases.push(rapconv_case(&mut rng)?);
        }
        if matches!(scope, Scope::Network | Scope::All) {
            cases.push(network_case(&mut rng)?);
        }
        for (name, inputs, f) in cases {
            let report = grad_check_many(f, &inputs, GRADCHECK_EPS)?;
            rows.push(SuiteRow {
                name,
                seed,
                max_rel_error: report.max_error(),
                max_component_error: report.max_component_error(),
            });
        }
    }
    Ok(rows)
}
