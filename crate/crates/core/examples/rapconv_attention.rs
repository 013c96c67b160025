//! Inspect the per-pixel attention field of a RAPConv layer and check the
//! degenerate mode against an ordinary 3×3 convolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rapnet::autodiff::Eager;
use rapnet::rapconv::{GhbmConfig, RapConv, RapConvMode};
use rapnet::tensor::conv2d;
use rapnet::{ConvSpec, Tensor};

fn main() -> rapnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = RapConv::<Tensor<f64>>::random(3, 5, &GhbmConfig::default(), 0.8, &mut rng)?;

    // a step edge down the middle
    let x = Tensor::from_fn([1, 3, 8, 8], |_, c, _, xx| if xx < 4 { 0.1 } else { 0.9 + 0.05 * c as f64 });
    let field = layer.attention_field(&x)?;
    for (y, xx) in [(4, 1), (4, 4), (4, 7)] {
        let p = field.patch(0, 0, y, xx);
        println!("channel 0 attention at ({y},{xx}):");
        for row in p {
            println!("  {:.3} {:.3} {:.3}", row[0], row[1], row[2]);
        }
    }

    let b = Eager;
    let out = layer.forward(&b, &x, RapConvMode::Adaptive)?;
    println!("adaptive output {}", out.shape());

    let plain = layer.forward(&b, &x, RapConvMode::DegenerateTest)?;
    let reference = conv2d(&x, &layer.base_kernel, None, &ConvSpec::same(3, 5, 3))?;
    println!("degenerate mode vs conv2d: max |diff| = {:e}", plain.max_abs_diff(&reference)?);
    Ok(())
}
