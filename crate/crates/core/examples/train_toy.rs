//! Overfit a small synthetic dataset and print the loss curve.
//!
//! `cargo run --release --example train_toy -- [epochs]`

use rapnet::data::{synth_dataset, DegradeSpec};
use rapnet::network::NetworkConfig;
use rapnet::training::{train, TrainConfig};

fn main() -> rapnet::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let data = synth_dataset::<f32>(0, 16, 32, 4, &DegradeSpec::with_ratio(4))?;
    let net = NetworkConfig {
        bands: 4,
        features: 16,
        ratio: 4,
        ..NetworkConfig::default()
    };
    let cfg = TrainConfig {
        batch_size: 4,
        epochs,
        seed: 0,
        ..TrainConfig::default()
    };
    let t = std::time::Instant::now();
    let outcome = train(&data, &cfg, cfg.init_network(net)?, None)?;
    for (i, m) in outcome.epoch_means.iter().enumerate() {
        if i % 5 == 0 || i + 1 == epochs {
            println!("epoch {i:>4}  mean loss {m:.3e}");
        }
    }
    println!("{} steps in {:?}", outcome.steps.len(), t.elapsed());
    Ok(())
}
