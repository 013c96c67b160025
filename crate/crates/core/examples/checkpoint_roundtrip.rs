//! Save a network, load it back and confirm the fused output is unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rapnet::network::{load_checkpoint, save_checkpoint, NetworkConfig, RapNet};
use rapnet::Tensor;

fn main() -> rapnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = NetworkConfig {
        bands: 4,
        features: 16,
        ..NetworkConfig::default()
    };
    let net = RapNet::<Tensor<f32>>::init(cfg, &mut rng)?;
    let pan = Tensor::rand_uniform([1, 1, 32, 32], 0.0, 1.0, &mut rng);
    let ms = Tensor::rand_uniform([1, 4, 8, 8], 0.0, 1.0, &mut rng);

    let path = std::env::temp_dir().join("rapnet_example.rapn");
    save_checkpoint(&net, &path)?;
    let back = load_checkpoint::<f32>(&path)?;
    let (a, b) = (net.fuse(&pan, &ms)?, back.fuse(&pan, &ms)?);
    println!("{} bytes, bit-identical output: {}", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0), a == b);
    let _ = std::fs::remove_file(&path);
    Ok(())
}
