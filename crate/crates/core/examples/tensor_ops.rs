//! Grouped convolution, same-size average pooling and bilinear upsampling
//! on a small NCHW tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rapnet::tensor::{avg_pool_same, conv2d, global_avg_pool, upsample, UpsampleMode};
use rapnet::{ConvSpec, Tensor};

fn main() -> rapnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Tensor<f64> = Tensor::rand_uniform([1, 4, 6, 6], 0.0, 1.0, &mut rng);

    // two groups of 2 → 3 channels, 3×3, zero padding 1
    let spec = ConvSpec { groups: 2, ..ConvSpec::same(4, 6, 3) };
    let w = Tensor::rand_uniform(spec.weight_shape(), -0.5, 0.5, &mut rng);
    let y = conv2d(&x, &w, None, &spec)?;
    println!("conv2d {} -> {}", x.shape(), y.shape());

    let pooled = avg_pool_same(&x, 3)?;
    println!("avg_pool_same keeps {}; corner {:.4}", pooled.shape(), pooled.at(0, 0, 0, 0));

    let up = upsample(&x, 4, UpsampleMode::Bilinear)?;
    println!("bilinear x4 -> {}", up.shape());
    let flat = upsample(&Tensor::<f64>::full([1, 1, 3, 3], 0.25), 4, UpsampleMode::Bilinear)?;
    println!("constant survives upsampling: {}", flat.data().iter().all(|&v| v == 0.25));

    let g = global_avg_pool(&x);
    println!("global mean per channel: {:?}", g.data().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    Ok(())
}
