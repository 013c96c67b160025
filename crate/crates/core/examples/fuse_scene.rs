//! Fuse a 256×256 PAN with a 64×64 eight-band MS using a freshly
//! initialised network and write a preview.
//!
//! `cargo run --release --example fuse_scene -- [out.png]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rapnet::data::{export_png, synth_scene, wald_degrade, DegradeSpec, Stretch};
use rapnet::network::{NetworkConfig, RapNet};
use rapnet::params::count;

fn main() -> rapnet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fused_preview.png".into());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (hrms, pan_hr) = synth_scene::<f32>(&mut rng, 256, 8);
    // full-resolution inputs: PAN at 256, MS at 64
    let pair = wald_degrade(&hrms, &pan_hr, &DegradeSpec::with_ratio(4), 1.0)?;

    let net = RapNet::<rapnet::Tensor<f32>>::init(NetworkConfig::default(), &mut rng)?;
    println!("network: {} parameters", count(&net));
    let t = std::time::Instant::now();
    let fused = net.fuse(&pair.pan, &pair.ms)?;
    println!("pan {} + ms {} -> {} in {:?}", pair.pan.shape(), pair.ms.shape(), fused.shape(), t.elapsed());

    export_png(std::path::Path::new(&out), &fused, &[4, 2, 1], Stretch::default())?;
    println!("preview: {out}");
    Ok(())
}
